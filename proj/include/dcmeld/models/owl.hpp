#pragma once

#include "dcmeld/melding.hpp"

#include <array>
#include <filesystem>
#include <vector>

// Little-owl integrated population model split into three submodels:
//   1. capture-recapture       phi_{1,2} = (alpha0, alpha2), psi_1 = (alpha1, alpha4, alpha5_2..alpha5_T)
//   2. population counts       phi_{2,3} = rho,             psi_2 = (alpha6, latent female counts)
//   3. fecundity                                            psi_3 empty
//
// Strata are indexed k = 2a + s with a = 0 juvenile, 1 adult and s = 0
// female, 1 male.

namespace dcmeld {

enum OwlAge : int { owl_juvenile = 0, owl_adult = 1 };
enum OwlSex : int { owl_female = 0, owl_male = 1 };
constexpr int owl_stratum(int age, int sex) { return 2 * age + sex; }

struct OwlData {
  int T = 0;
  /// capture[k](t-1, u-1): individuals released at t and first recaptured
  /// at u; column T holds the never-recaptured count.
  std::array<MatrixXd, 4> capture;
  std::vector<double> y;     ///< population counts, t = 1..T
  std::vector<double> n_br;  ///< breeding females
  std::vector<double> n_ch;  ///< fledged chicks
  void validate() const;
  double releases(int k, int t) const;
};

/// Demographic parameters in natural units; alpha5[u-2] holds alpha5_u.
struct OwlParams {
  double alpha0 = -1.0, alpha1 = 0.2, alpha2 = 1.2, alpha4 = 0.3;
  std::vector<double> alpha5;
  double alpha6 = -1.9;
  double rho = 2.4;
  double xj1 = 10.0, xa1 = 20.0;
};

/// Documented generating values for synthetic data sets.
OwlParams owl_default_truth(int T);

struct OwlRates {
  std::array<double, 4> delta{};        ///< survival per stratum (time-constant)
  std::array<std::vector<double>, 2> pi;  ///< pi[s][u-1], u = 1..T; pi[s][0] is unused and set to 0
  double eta = 0.0;                     ///< immigration rate (time-constant)
};

OwlRates owl_link(double alpha0, double alpha1, double alpha2, double alpha4, ConstSpan alpha5, double alpha6,
                  int T);

/// T x (T+1) first-recapture probabilities for one stratum. delta[t-1] is
/// survival from t to t+1 and pi[u-1] recapture probability at u.
MatrixXd owl_Q(ConstSpan delta, ConstSpan pi, int T);

/// Multinomial log-likelihood of the capture matrices without the
/// multinomial coefficients. `alpha` = (alpha0, alpha2, alpha1, alpha4, alpha5_2..alpha5_T).
double owl_capture_loglik(const OwlData& data, ConstSpan alpha);

/// Latent process and count observations. `latent` = (xJ1, xA1, then
/// (xJ_t, surv_t, imm_t) for t = 2..T).
double owl_count_loglik(std::span<const double> y, ConstSpan latent, double delta_jf, double delta_af, double eta,
                        double rho);

double owl_fecundity_loglik(const OwlData& data, double rho);

/// log p of the original integrated model at a point of the melded global
/// layout (priors included).
double owl_ipm_log_joint(const OwlData& data, ConstSpan theta);

std::vector<std::shared_ptr<const Submodel>> owl_submodels(const OwlData& data);
/// Three-submodel melded model with roles (original, correction, original).
ChainMeldedModel owl_build(const OwlData& data, std::vector<double> lambda);

OwlData owl_simulate(const OwlParams& truth, int T, std::uint64_t seed);

void write_owl_data(const std::filesystem::path& dir, const OwlData& data);
OwlData read_owl_data(const std::filesystem::path& dir, int T = 0);
void write_owl_truth(const std::filesystem::path& path, const OwlParams& truth, int T, std::uint64_t seed);

}  // namespace dcmeld
