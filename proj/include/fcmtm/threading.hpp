#pragma once

namespace fcmtm {

/// Caps kernel parallelism (Eigen GEMM and the per-channel filter loops).
/// 0 restores the runtime default.
void set_thread_count(int threads);
int thread_count();

}  // namespace fcmtm
