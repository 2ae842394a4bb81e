#pragma once

#include <cstddef>

namespace powerspec {

// Selects between the OpenMP kernels and their serial reference path.
// Both paths perform identical arithmetic per work item, so results are
// bit-identical; only the scheduling differs.
enum class Exec { serial, parallel };

// Sets the OpenMP worker count; n <= 0 leaves the runtime default.
void set_thread_count(int n);
int thread_count();

}  // namespace powerspec
