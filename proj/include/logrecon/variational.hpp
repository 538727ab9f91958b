#pragma once

#include <cstdint>
#include <vector>

#include "logrecon/projector.hpp"

namespace logrecon {

/// Estimate of the largest singular value of the ray transform by power
/// iteration on A^T A from a seeded random start. The estimate after k steps is
/// sqrt(|A^T A v_k|) for unit v_k, which never decreases with k.
double opnorm_power_iteration(const FanBeamGeometry& geom, int n_iter, std::uint64_t seed);

// Per-iteration history of the same estimate, for monotonicity checks.
std::vector<double> opnorm_power_history(const FanBeamGeometry& geom, int n_iter, std::uint64_t seed);

struct TVConfig {
  double lambda = 0.01;
  int n_iter = 300;
  double tau = 0.0;    // 0 selects 0.99 / |A|^2
  double sigma = 0.0;  // 0 selects 0.49
  double theta = 1.0;
  int power_iterations = 100;
  std::uint64_t seed = 0;
};

struct TVResult {
  ImageSlice image;
  std::vector<double> energy;  // primal energy after each iteration
  double operator_norm = 0.0;  // norm of the stacked operator (A, mu grad)
};

/// Primal energy 0.5 |A x - y|^2 + lambda * sum |grad x| (isotropic, forward
/// differences, Neumann boundary).
double tv_energy(const ImageSlice& x, const Sinogram& sino, const FanBeamGeometry& geom, double lambda);

/// Primal-dual iterations for the TV-regularised least-squares problem: the data
/// term takes an explicit gradient step and TV is handled through its dual
/// (Condat-Vu form of Chambolle-Pock). The TV block is rescaled to the norm of A;
/// the minimiser is unchanged.
TVResult tv_pdhg(const Sinogram& sino, const FanBeamGeometry& geom, const TVConfig& config);

}  // namespace logrecon
