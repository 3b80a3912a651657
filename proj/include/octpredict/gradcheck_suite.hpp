#pragma once

#include <ostream>

namespace oct {

// Runs finite-difference verification for every layer kind plus a small
// composite network, printing one line per case. Returns true when every
// case stays within tolerance.
bool run_gradcheck_suite(std::ostream& out, int probes_per_case = 120, double tol = 1e-5);

}  // namespace oct
