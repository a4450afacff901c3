// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

namespace ssnmt {

enum class ScheduleKind { Constant, Linear, Exponential, InverseSigmoid };

/// epsilon(progress): probability of feeding the model's own estimate at a
/// decoder step. It grows with training progress because the probability of
/// feeding the gold token decays.
///
///   constant         epsilon = k
///   linear           epsilon = clamp(k * progress + c, 0, 1),   k >= 0
///   exponential      epsilon = 1 - k^(progress * T),            0 < k <= 1
///   inverse_sigmoid  epsilon = 1 - k / (k + exp(progress * T / k)),  k > 0
struct SamplingSchedule {
  ScheduleKind kind = ScheduleKind::Constant;
  double k = 0.0;
  double c = 0.0;
  double horizon = 100.0;

  static SamplingSchedule constant(double value);
  static SamplingSchedule linear(double slope = 1.0, double offset = 0.0);
  static SamplingSchedule exponential(double base = 0.97, double horizon = 100.0);
  static SamplingSchedule inverse_sigmoid(double k = 10.0, double horizon = 100.0);

  /// Throws ConfigError for parameters outside the documented ranges.
  void validate() const;
  std::string describe() const;
};

/// progress must lie in [0, 1].
double epsilon(const SamplingSchedule& schedule, double progress);

/// Builds a schedule from a kind name ("constant", "linear", "exponential",
/// "inverse-sigmoid") and k=v overrides (keys k, c, T).
SamplingSchedule parse_schedule(const std::string& kind,
                                const std::map<std::string, double>& params);
ScheduleKind parse_schedule_kind(const std::string& name);
std::string to_string(ScheduleKind kind);

}  // namespace ssnmt
