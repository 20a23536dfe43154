#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nnu {

struct GradBlockReport {
  std::string block;
  double max_rel_err = 0.0;
};

// Finite-difference audit (64-bit): every op type in isolation, then both
// reduced-width networks end to end. Per-layer blocks must stay under 1e-4,
// end-to-end blocks under 1e-3.
struct GradcheckReport {
  std::vector<GradBlockReport> per_layer;
  std::vector<GradBlockReport> end_to_end;
  double worst_layer = 0.0;
  double worst_model = 0.0;
  bool pass = false;
  std::string text() const;
};

GradcheckReport run_gradcheck(std::uint64_t seed);

}  // namespace nnu
