// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace ssnmt {

/// Keeps freed tape memory in the process between batches instead of handing
/// it back to the kernel and faulting it in again. No-op outside glibc.
void tune_allocator();

}  // namespace ssnmt
