#pragma once

namespace emgtl {

/// Selects between the serial reference kernels and their OpenMP versions.
/// Both produce bitwise-identical results; the serial path is kept for tests
/// and benchmarks.
enum class Backend { Serial, OpenMP };

Backend default_backend();
void set_default_backend(Backend backend);

}  // namespace emgtl
