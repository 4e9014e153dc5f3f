#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fedate/data.hpp"
#include "fedate/scenarios.hpp"

namespace fedate {

// Desk-scale stand-in for a multi-site registry: 13 sites of very different
// sizes, treatment probabilities between 0.2 and 0.8, 15 covariates.
//   cols 0-3   N(0, 1) at every site; the only columns that modify the effect
//   cols 4-7   N(m_k, 1) with a site-specific mean
//   cols 8-14  binary, site-specific prevalence in [0.3, 0.7]
struct StandInDesign {
  std::vector<std::size_t> sizes{2000, 1500, 1100, 800, 600, 500, 400, 350, 300, 200, 150, 110, 87};
  std::vector<double> p{0.8, 0.2, 0.8, 0.2, 0.7, 0.3, 0.5, 0.5, 0.6, 0.75, 0.25, 0.8, 0.2};
  double mean_shift = 1.0;
  double noise_sd = 1.4142135623730951;
  std::uint64_t seed = 2024;

  std::size_t K() const { return sizes.size(); }
  void validate() const;
};

inline constexpr Eigen::Index kStandInCovariates = 15;

// Covariates from the design seed, with one linear regeneration so the
// treatment and outcome columns are filled.
FederatedDataset stand_in_dataset(const StandInDesign& design = {});

// Outcome model for regeneration. The arms differ on cols 0-3, so in polynomial
// mode the effect picks up the squared and cubed terms.
RegenerationSpec stand_in_outcomes(const StandInDesign& design, OutcomeMode mode);

}  // namespace fedate
