// SPDX-License-Identifier: Apache-2.0
#include "ssnmt/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ssnmt/errors.hpp"

namespace ssnmt {

SamplingSchedule SamplingSchedule::constant(double value) {
  SamplingSchedule s;
  s.kind = ScheduleKind::Constant;
  s.k = value;
  s.validate();
  return s;
}

SamplingSchedule SamplingSchedule::linear(double slope, double offset) {
  SamplingSchedule s;
  s.kind = ScheduleKind::Linear;
  s.k = slope;
  s.c = offset;
  s.validate();
  return s;
}

SamplingSchedule SamplingSchedule::exponential(double base, double horizon) {
  SamplingSchedule s;
  s.kind = ScheduleKind::Exponential;
  s.k = base;
  s.horizon = horizon;
  s.validate();
  return s;
}

SamplingSchedule SamplingSchedule::inverse_sigmoid(double k, double horizon) {
  SamplingSchedule s;
  s.kind = ScheduleKind::InverseSigmoid;
  s.k = k;
  s.horizon = horizon;
  s.validate();
  return s;
}

void SamplingSchedule::validate() const {
  if (!std::isfinite(k) || !std::isfinite(c) || !std::isfinite(horizon)) {
    throw ConfigError("schedule parameters must be finite");
  }
  switch (kind) {
    case ScheduleKind::Constant:
      if (k < 0.0 || k > 1.0) throw ConfigError("constant schedule value must lie in [0, 1]");
      break;
    case ScheduleKind::Linear:
      if (k < 0.0) throw ConfigError("linear schedule slope k must be >= 0");
      break;
    case ScheduleKind::Exponential:
      if (k <= 0.0 || k > 1.0) throw ConfigError("exponential schedule base k must lie in (0, 1]");
      if (horizon <= 0.0) throw ConfigError("exponential schedule horizon T must be > 0");
      break;
    case ScheduleKind::InverseSigmoid:
      if (k <= 0.0) throw ConfigError("inverse-sigmoid schedule k must be > 0");
      if (horizon <= 0.0) throw ConfigError("inverse-sigmoid schedule horizon T must be > 0");
      break;
  }
}

std::string SamplingSchedule::describe() const {
  std::ostringstream os;
  os << to_string(kind) << "(k=" << k;
  if (kind == ScheduleKind::Linear) os << ", c=" << c;
  if (kind == ScheduleKind::Exponential || kind == ScheduleKind::InverseSigmoid) {
    os << ", T=" << horizon;
  }
  os << ")";
  return os.str();
}

double epsilon(const SamplingSchedule& s, double progress) {
  if (!(progress >= 0.0 && progress <= 1.0)) {
    throw ContractError("schedule progress must lie in [0, 1], got " + std::to_string(progress));
  }
  s.validate();
  double e = 0.0;
  switch (s.kind) {
    case ScheduleKind::Constant: e = s.k; break;
    case ScheduleKind::Linear: e = s.k * progress + s.c; break;
    case ScheduleKind::Exponential: e = 1.0 - std::pow(s.k, progress * s.horizon); break;
    case ScheduleKind::InverseSigmoid:
      e = 1.0 - s.k / (s.k + std::exp(progress * s.horizon / s.k));
      break;
  }
  return std::clamp(e, 0.0, 1.0);
}

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "constant") return ScheduleKind::Constant;
  if (name == "linear") return ScheduleKind::Linear;
  if (name == "exponential") return ScheduleKind::Exponential;
  if (name == "inverse-sigmoid" || name == "inverse_sigmoid") return ScheduleKind::InverseSigmoid;
  throw ConfigError("unknown schedule '" + name +
                    "' (expected constant, linear, exponential, inverse-sigmoid)");
}

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::Constant: return "constant";
    case ScheduleKind::Linear: return "linear";
    case ScheduleKind::Exponential: return "exponential";
    case ScheduleKind::InverseSigmoid: return "inverse-sigmoid";
  }
  return "?";
}

SamplingSchedule parse_schedule(const std::string& kind,
                                const std::map<std::string, double>& params) {
  SamplingSchedule s;
  s.kind = parse_schedule_kind(kind);
  switch (s.kind) {
    case ScheduleKind::Constant: s = SamplingSchedule{ScheduleKind::Constant, 0.0, 0.0, 100.0}; break;
    case ScheduleKind::Linear: s = SamplingSchedule{ScheduleKind::Linear, 1.0, 0.0, 100.0}; break;
    case ScheduleKind::Exponential:
      s = SamplingSchedule{ScheduleKind::Exponential, 0.97, 0.0, 100.0};
      break;
    case ScheduleKind::InverseSigmoid:
      s = SamplingSchedule{ScheduleKind::InverseSigmoid, 10.0, 0.0, 100.0};
      break;
  }
  for (const auto& [key, value] : params) {
    if (key == "k") {
      s.k = value;
    } else if (key == "c") {
      s.c = value;
    } else if (key == "T") {
      s.horizon = value;
    } else {
      throw ConfigError("unknown schedule parameter '" + key + "' (expected k, c or T)");
    }
  }
  s.validate();
  return s;
}

}  // namespace ssnmt
