#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hrg/coupling.hpp"
#include "hrg/radial.hpp"
#include "hrg/rg_flow.hpp"

namespace hrg {

/// Hierarchical distance d(j, k) = 2^{n(j,k)-1} for sites j, k >= 1.
double hier_distance(long j, long k);
int hier_level(long j, long k);

/// The finite volume {1..2^n} with its pair couplings J(j,k) = l(d)/d^2.
class HierVolume {
 public:
  HierVolume(int n, int r, CouplingSequence coupling, double T);

  int n() const { return n_; }
  int sites() const { return 1 << n_; }
  int r() const { return r_; }
  double T() const { return T_; }

  /// J between sites (1-based). 0 on the diagonal.
  double J(int j, int k) const { return J_[(j - 1) * sites() + (k - 1)]; }

  /// H = -sum_{j<k} J(j,k) sigma(j).sigma(k); spins packed r per site.
  double hamiltonian(std::span<const double> spins) const;

  /// Zero all couplings (decoupled-limit test harness).
  void zero_couplings();

 private:
  int n_, r_;
  double T_;
  CouplingSequence coupling_;
  std::vector<double> J_;
};

struct McSettings {
  long sweeps = 1000000;
  std::uint64_t seed = 1;
  int batches = 20;
  double burn_fraction = 0.2;
  int hist_bins = 32;
  double hist_max = 0.0;  // 0 = auto from data
  std::vector<double> eps_poly;
  double kappa = 0.05;
};

struct McEstimate {
  std::string name;
  double value = 0.0;
  double std_error = 0.0;
};

struct McResult {
  McEstimate m2;  // E|mean spin|^2
  McEstimate m4;  // E|mean spin|^4
  std::vector<double> hist_density;    // radial histogram of |mean spin|
  std::vector<double> hist_std_error;  // per-bin density standard error
  std::vector<double> hist_edges;      // hist_bins + 1 edges
  double acceptance = 0.0;
  double proposal_step = 0.0;
  bool nonergodic_warning = false;
  long sweeps = 0;
  std::uint64_t seed = 0;
  std::string to_json() const;
};

/// Single-site Metropolis with mixed Gaussian-displacement and random
/// rotation proposals; reproducible for a given (seed, sweeps).
McResult mc_sample(const HierVolume& vol, const McSettings& settings);

/// E|sigma|^2 of the single-site density by 1-D quadrature (decoupled
/// oracle).
double single_site_second_moment(int r, double kappa,
                                 const std::vector<double>& eps_poly);

/// p_1 for r = 2 by direct quadrature of the raw recursion, independent of
/// the q-coordinate flow path.
RadialDensity direct_p1(const ModelParams& params,
                        const CouplingSequence& coupling, int grid_m = 1201,
                        int quad_nodes = 220);

}  // namespace hrg
