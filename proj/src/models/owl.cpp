#include "dcmeld/models/owl.hpp"

#include "dcmeld/models/densities.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace dcmeld {

namespace {

constexpr double kAlphaBound = 10.0;
constexpr double kAlphaSd = 2.0;
constexpr double kRhoMax = 10.0;
constexpr double kInitialMax = 50.0;

double alpha_prior(double a) { return dens::truncated_normal(a, 0.0, kAlphaSd, -kAlphaBound, kAlphaBound); }
double sample_alpha(RandomStream& rng) {
  return dens::sample_truncated_normal(rng, 0.0, kAlphaSd, -kAlphaBound, kAlphaBound);
}
double rho_prior(double r) { return dens::uniform(r, 0.0, kRhoMax); }

double discrete_uniform_initial(double x) {
  if (x < 0 || x > kInitialMax || x != std::floor(x)) return kNegInf;
  return -std::log(kInitialMax + 1.0);
}

double add(double a, double b) { return (a == kNegInf || b == kNegInf) ? kNegInf : a + b; }

const char* age_tag(int a) { return a == owl_juvenile ? "J" : "A"; }
const char* sex_tag(int s) { return s == owl_female ? "F" : "M"; }

// Latent layout helpers: (xJ1, xA1, (xJ_t, surv_t, imm_t) for t = 2..T).
Index latent_dim(int T) { return 2 + 3 * static_cast<Index>(T - 1); }
std::size_t triple(int t) { return static_cast<std::size_t>(2 + 3 * (t - 2)); }

double pop_size(ConstSpan latent, int t) {
  if (t == 1) return latent[0] + latent[1];
  const std::size_t o = triple(t);
  return latent[o] + latent[o + 1] + latent[o + 2];
}

double process_step(ConstSpan latent, int t, double delta_jf, double delta_af, double eta, double rho) {
  if (t == 1) return add(discrete_uniform_initial(latent[0]), discrete_uniform_initial(latent[1]));
  const double prev = pop_size(latent, t - 1);
  const std::size_t o = triple(t);
  double out = dens::poisson(latent[o], prev * rho / 2.0 * delta_jf);
  out = add(out, dens::binomial(latent[o + 1], prev, delta_af));
  return add(out, dens::poisson(latent[o + 2], prev * eta));
}

double observation(std::span<const double> y, ConstSpan latent, int t) {
  return dens::poisson(y[static_cast<std::size_t>(t - 1)], pop_size(latent, t));
}

double count_step(std::span<const double> y, ConstSpan latent, int t, double delta_jf, double delta_af, double eta,
                  double rho) {
  return add(process_step(latent, t, delta_jf, delta_af, eta, rho), observation(y, latent, t));
}

// Data-informed proposal for one time step of the latent path.
double proposal_rate(double y) { return std::max(y, 0.5); }

double proposal_step(std::span<const double> y, ConstSpan latent, int t) {
  const double rate = proposal_rate(y[static_cast<std::size_t>(t - 1)]);
  if (t == 1) {
    const double x = latent[0] + latent[1];
    return add(dens::poisson(x, rate), dens::binomial(latent[0], x, 0.5));
  }
  const std::size_t o = triple(t);
  const double x = pop_size(latent, t);
  const double prev = pop_size(latent, t - 1);
  const double surv = latent[o + 1];
  double out = dens::poisson(x, rate);
  out = add(out, dens::binomial(surv, std::min(x, prev), 0.5));
  out = add(out, dens::binomial(latent[o], x - surv, 0.5));
  return out;
}

// Above this size the integer samplers are replaced by a rounded normal
// approximation; prior draws of the latent process can grow geometrically.
constexpr double kExactDrawLimit = 1e7;

double draw_poisson(double rate, RandomStream& rng) {
  if (!(rate > 0.0)) return 0.0;
  if (rate < kExactDrawLimit) return static_cast<double>(std::poisson_distribution<long>(rate)(rng));
  return std::max(0.0, std::round(rng.normal(rate, std::sqrt(rate))));
}

double draw_binomial(double n, double p, RandomStream& rng) {
  if (n < kExactDrawLimit) return static_cast<double>(std::binomial_distribution<long>(static_cast<long>(n), p)(rng));
  return std::clamp(std::round(rng.normal(n * p, std::sqrt(n * p * (1.0 - p)))), 0.0, n);
}

// ---------------------------------------------------------------------------

class CaptureSubmodel final : public Submodel {
 public:
  explicit CaptureSubmodel(OwlData data) : d_(std::move(data)) {}

  Index dim_phi_left() const override { return 0; }
  Index dim_phi_right() const override { return 2; }
  Index dim_psi() const override { return 2 + (d_.T - 1); }

  bool phi_prior_factorizes() const override { return true; }
  double log_phi_prior_left(ConstSpan) const override { return 0.0; }
  double log_phi_prior_right(ConstSpan p) const override { return add(alpha_prior(p[0]), alpha_prior(p[1])); }
  double log_phi_prior(ConstSpan phi) const override { return log_phi_prior_right(phi); }
  void sample_phi_prior_right(RandomStream& rng, MutSpan p) const override {
    p[0] = sample_alpha(rng);
    p[1] = sample_alpha(rng);
  }
  void sample_phi_prior(RandomStream& rng, MutSpan phi) const override { sample_phi_prior_right(rng, phi); }

  double log_psi_prior(ConstSpan, ConstSpan psi) const override {
    double out = 0.0;
    for (double a : psi) out = add(out, alpha_prior(a));
    return out;
  }
  void sample_psi_prior(ConstSpan, RandomStream& rng, MutSpan psi) const override {
    for (double& a : psi) a = sample_alpha(rng);
  }
  std::vector<double> psi_reference(ConstSpan) const override {
    return std::vector<double>(static_cast<std::size_t>(dim_psi()), 0.0);
  }

  double log_likelihood(ConstSpan phi, ConstSpan psi) const override {
    std::vector<double> alpha(phi.begin(), phi.end());
    alpha.insert(alpha.end(), psi.begin(), psi.end());
    return owl_capture_loglik(d_, alpha);
  }

  std::vector<std::string> phi_right_labels() const override { return {"alpha0", "alpha2"}; }
  std::vector<std::string> psi_labels() const override {
    std::vector<std::string> out{"alpha1", "alpha4"};
    for (int u = 2; u <= d_.T; ++u) out.push_back("alpha5_" + std::to_string(u));
    return out;
  }

 private:
  OwlData d_;
};

class CountSubmodel final : public Submodel {
 public:
  explicit CountSubmodel(OwlData data) : d_(std::move(data)) {}

  Index dim_phi_left() const override { return 2; }
  Index dim_phi_right() const override { return 1; }
  Index dim_psi() const override { return 1 + latent_dim(d_.T); }

  bool phi_prior_factorizes() const override { return true; }
  double log_phi_prior_left(ConstSpan p) const override { return add(alpha_prior(p[0]), alpha_prior(p[1])); }
  double log_phi_prior_right(ConstSpan p) const override { return rho_prior(p[0]); }
  double log_phi_prior(ConstSpan phi) const override {
    return add(log_phi_prior_left(phi.first(2)), log_phi_prior_right(phi.subspan(2)));
  }
  void sample_phi_prior_right(RandomStream& rng, MutSpan p) const override { p[0] = rng.uniform(0.0, kRhoMax); }
  void sample_phi_prior(RandomStream& rng, MutSpan phi) const override {
    phi[0] = sample_alpha(rng);
    phi[1] = sample_alpha(rng);
    phi[2] = rng.uniform(0.0, kRhoMax);
  }

  double log_psi_prior(ConstSpan phi, ConstSpan psi) const override {
    double out = alpha_prior(psi[0]);
    if (out == kNegInf) return kNegInf;
    const ConstSpan latent = psi.subspan(1);
    const auto [dj, da, eta] = rates(phi[0], phi[1], psi[0]);
    for (int t = 1; t <= d_.T && out != kNegInf; ++t) out = add(out, process_step(latent, t, dj, da, eta, phi[2]));
    return out;
  }
  void sample_psi_prior(ConstSpan phi, RandomStream& rng, MutSpan psi) const override {
    psi[0] = sample_alpha(rng);
    const auto [dj, da, eta] = rates(phi[0], phi[1], psi[0]);
    MutSpan lat = psi.subspan(1);
    lat[0] = static_cast<double>(rng.below(51));
    lat[1] = static_cast<double>(rng.below(51));
    for (int t = 2; t <= d_.T; ++t) {
      const double prev = pop_size(lat, t - 1);
      const std::size_t o = triple(t);
      lat[o] = draw_poisson(prev * phi[2] / 2.0 * dj, rng);
      lat[o + 1] = draw_binomial(prev, da, rng);
      lat[o + 2] = draw_poisson(prev * eta, rng);
    }
  }

  double log_likelihood(ConstSpan, ConstSpan psi) const override {
    double out = 0.0;
    for (int t = 1; t <= d_.T; ++t) out = add(out, observation(d_.y, psi.subspan(1), t));
    return out;
  }

  void sample_psi_proposal(ConstSpan, RandomStream& rng, MutSpan psi) const override {
    psi[0] = sample_alpha(rng);
    MutSpan lat = psi.subspan(1);
    for (int t = 1; t <= d_.T; ++t) {
      const double x = draw_poisson(proposal_rate(d_.y[static_cast<std::size_t>(t - 1)]), rng);
      if (t == 1) {
        lat[0] = draw_binomial(x, 0.5, rng);
        lat[1] = x - lat[0];
        continue;
      }
      const double prev = pop_size(lat, t - 1);
      const std::size_t o = triple(t);
      lat[o + 1] = draw_binomial(std::min(x, prev), 0.5, rng);
      lat[o] = draw_binomial(x - lat[o + 1], 0.5, rng);
      lat[o + 2] = x - lat[o + 1] - lat[o];
    }
  }
  double log_psi_proposal(ConstSpan, ConstSpan psi) const override {
    double out = alpha_prior(psi[0]);
    for (int t = 1; t <= d_.T && out != kNegInf; ++t) out = add(out, proposal_step(d_.y, psi.subspan(1), t));
    return out;
  }

  std::vector<double> psi_reference(ConstSpan) const override { return initial_path(); }

  std::vector<bool> psi_discrete() const override {
    std::vector<bool> out(static_cast<std::size_t>(dim_psi()), true);
    out[0] = false;
    return out;
  }

  std::vector<std::string> phi_right_labels() const override { return {"rho"}; }
  std::vector<std::string> psi_labels() const override {
    std::vector<std::string> out{"alpha6", "xJ_1", "xA_1"};
    for (int t = 2; t <= d_.T; ++t) {
      const auto s = std::to_string(t);
      out.insert(out.end(), {"xJ_" + s, "surv_" + s, "imm_" + s});
    }
    return out;
  }

  // Local layout: 0 alpha0, 1 alpha2, 2 rho, 3 alpha6, then the latent path.
  std::vector<Factor> conditional_factors() const override {
    std::vector<Factor> out;
    out.push_back({{3}, [](ConstSpan l) { return alpha_prior(l[3]); }, "alpha6_prior"});
    for (int t = 1; t <= d_.T; ++t) {
      std::vector<Index> deps;
      if (t == 1) {
        deps = {4, 5};
      } else {
        deps = {0, 1, 2, 3};
        for (Index c : step_columns(t - 1)) deps.push_back(c);
        for (Index c : step_columns(t)) deps.push_back(c);
      }
      out.push_back({std::move(deps),
                     [this, t](ConstSpan l) {
                       const auto [dj, da, eta] = rates(l[0], l[1], l[3]);
                       return count_step(d_.y, l.subspan(4), t, dj, da, eta, l[2]);
                     },
                     "step" + std::to_string(t)});
    }
    return out;
  }

  std::vector<Factor> proposal_factors() const override {
    std::vector<Factor> out;
    out.push_back({{3}, [](ConstSpan l) { return alpha_prior(l[3]); }, "alpha6_proposal"});
    for (int t = 1; t <= d_.T; ++t) {
      std::vector<Index> deps;
      if (t > 1)
        for (Index c : step_columns(t - 1)) deps.push_back(c);
      for (Index c : step_columns(t)) deps.push_back(c);
      out.push_back({std::move(deps), [this, t](ConstSpan l) { return proposal_step(d_.y, l.subspan(4), t); },
                     "proposal_step" + std::to_string(t)});
    }
    return out;
  }

 private:
  struct Rates {
    double delta_jf, delta_af, eta;
  };
  static Rates rates(double alpha0, double alpha2, double alpha6) {
    return {dens::inv_logit(alpha0), dens::inv_logit(alpha0 + alpha2), std::exp(alpha6)};
  }
  static std::vector<Index> step_columns(int t) {
    if (t == 1) return {4, 5};
    const auto o = static_cast<Index>(4 + triple(t));
    return {o, o + 1, o + 2};
  }
  std::vector<double> initial_path() const {
    std::vector<double> psi(static_cast<std::size_t>(dim_psi()), 0.0);
    MutSpan lat = MutSpan(psi).subspan(1);
    const double x1 = std::min(std::max(d_.y[0], 1.0), 2.0 * kInitialMax);
    lat[0] = std::min(std::round(0.3 * x1), kInitialMax);
    lat[1] = std::min(x1 - lat[0], kInitialMax);
    for (int t = 2; t <= d_.T; ++t) {
      const double x = std::max(d_.y[static_cast<std::size_t>(t - 1)], 1.0);
      const double prev = pop_size(lat, t - 1);
      const std::size_t o = triple(t);
      lat[o + 1] = std::min(prev, std::round(0.5 * x));
      lat[o] = std::round(0.5 * (x - lat[o + 1]));
      lat[o + 2] = x - lat[o + 1] - lat[o];
    }
    return psi;
  }

  OwlData d_;
};

class FecunditySubmodel final : public Submodel {
 public:
  explicit FecunditySubmodel(OwlData data) : d_(std::move(data)) {}

  Index dim_phi_left() const override { return 1; }
  Index dim_phi_right() const override { return 0; }
  Index dim_psi() const override { return 0; }

  bool phi_prior_factorizes() const override { return true; }
  double log_phi_prior_left(ConstSpan p) const override { return rho_prior(p[0]); }
  double log_phi_prior_right(ConstSpan) const override { return 0.0; }
  double log_phi_prior(ConstSpan phi) const override { return rho_prior(phi[0]); }
  void sample_phi_prior_right(RandomStream&, MutSpan) const override {}
  void sample_phi_prior(RandomStream& rng, MutSpan phi) const override { phi[0] = rng.uniform(0.0, kRhoMax); }

  double log_psi_prior(ConstSpan, ConstSpan) const override { return 0.0; }
  void sample_psi_prior(ConstSpan, RandomStream&, MutSpan) const override {}
  std::vector<double> psi_reference(ConstSpan) const override { return {}; }
  double log_likelihood(ConstSpan phi, ConstSpan) const override { return owl_fecundity_loglik(d_, phi[0]); }

 private:
  OwlData d_;
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path, bool header) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open owl data file " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first && header) {
      first = false;
      continue;
    }
    first = false;
    std::vector<double> row;
    for (const auto& cell : split_csv(line)) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0) throw ConfigError(path.string() + ": non-numeric cell '" + cell + "'");
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void OwlData::validate() const {
  if (T < 2) throw ConfigError("owl data: T must be at least 2");
  for (int k = 0; k < 4; ++k) {
    const auto& m = capture[static_cast<std::size_t>(k)];
    if (m.rows() != T || m.cols() != T + 1)
      throw ConfigError("owl data: capture matrix " + std::to_string(k) + " must be " + std::to_string(T) + " x " +
                        std::to_string(T + 1));
    for (Index t = 0; t < T; ++t)
      for (Index u = 0; u <= T; ++u) {
        const double v = m(t, u);
        if (v < 0 || v != std::floor(v)) throw ConfigError("owl data: capture counts must be non-negative integers");
        if (u < T && u <= t && v != 0)
          throw ConfigError("owl data: recapture recorded at or before the release time");
      }
  }
  const auto check = [&](const std::vector<double>& v, const char* name) {
    if (static_cast<int>(v.size()) != T) throw ConfigError(std::string("owl data: ") + name + " must have T entries");
    for (double x : v)
      if (x < 0 || x != std::floor(x)) throw ConfigError(std::string("owl data: ") + name + " must be counts");
  };
  check(y, "counts");
  check(n_br, "N_br");
  check(n_ch, "n_ch");
}

double OwlData::releases(int k, int t) const { return capture[static_cast<std::size_t>(k)].row(t - 1).sum(); }

OwlParams owl_default_truth(int T) {
  OwlParams p;
  p.alpha5.resize(static_cast<std::size_t>(T - 1));
  for (int u = 2; u <= T; ++u) p.alpha5[static_cast<std::size_t>(u - 2)] = 0.3 * std::sin(static_cast<double>(u));
  return p;
}

OwlRates owl_link(double alpha0, double alpha1, double alpha2, double alpha4, ConstSpan alpha5, double alpha6, int T) {
  if (static_cast<int>(alpha5.size()) != T - 1) throw ShapeError("owl_link: alpha5 must have T - 1 entries");
  OwlRates r;
  for (int a = 0; a < 2; ++a)
    for (int s = 0; s < 2; ++s)
      r.delta[static_cast<std::size_t>(owl_stratum(a, s))] =
          dens::inv_logit(alpha0 + alpha1 * (s == owl_male) + alpha2 * (a == owl_adult));
  for (int s = 0; s < 2; ++s) {
    auto& pi = r.pi[static_cast<std::size_t>(s)];
    pi.assign(static_cast<std::size_t>(T), 0.0);
    for (int u = 2; u <= T; ++u)
      pi[static_cast<std::size_t>(u - 1)] = dens::inv_logit(alpha4 * (s == owl_male) + alpha5[static_cast<std::size_t>(u - 2)]);
  }
  r.eta = std::exp(alpha6);
  return r;
}

MatrixXd owl_Q(ConstSpan delta, ConstSpan pi, int T) {
  if (static_cast<int>(delta.size()) != T || static_cast<int>(pi.size()) != T)
    throw ShapeError("owl_Q: delta and pi must have T entries");
  MatrixXd Q = MatrixXd::Zero(T, T + 1);
  // cum[r] = sum_{r' <= r} log(delta_r' (1 - pi_r')), 1-based r
  std::vector<double> cum(static_cast<std::size_t>(T + 1), 0.0);
  for (int r = 1; r <= T; ++r)
    cum[static_cast<std::size_t>(r)] =
        cum[static_cast<std::size_t>(r - 1)] + std::log(delta[static_cast<std::size_t>(r - 1)]) +
        std::log1p(-pi[static_cast<std::size_t>(r - 1)]);
  for (int t = 1; t <= T; ++t) {
    double total = 0.0;
    for (int u = t + 1; u <= T; ++u) {
      const double lq = std::log(delta[static_cast<std::size_t>(t - 1)]) + std::log(pi[static_cast<std::size_t>(u - 1)]) +
                        cum[static_cast<std::size_t>(u - 1)] - cum[static_cast<std::size_t>(t)];
      Q(t - 1, u - 1) = std::exp(lq);
      total += Q(t - 1, u - 1);
    }
    Q(t - 1, T) = 1.0 - total;
    if (Q(t - 1, T) < -1e-12) throw NumericalError("owl_Q: negative never-recaptured probability");
    Q(t - 1, T) = std::max(Q(t - 1, T), 0.0);
  }
  return Q;
}

double owl_capture_loglik(const OwlData& data, ConstSpan alpha) {
  const int T = data.T;
  if (static_cast<int>(alpha.size()) != 4 + T - 1) throw ShapeError("owl_capture_loglik: wrong parameter length");
  const OwlRates r = owl_link(alpha[0], alpha[2], alpha[1], alpha[3], alpha.subspan(4), 0.0, T);
  double out = 0.0;
  std::vector<double> delta(static_cast<std::size_t>(T));
  for (int k = 0; k < 4; ++k) {
    std::fill(delta.begin(), delta.end(), r.delta[static_cast<std::size_t>(k)]);
    const MatrixXd Q = owl_Q(delta, r.pi[static_cast<std::size_t>(k % 2)], T);
    const MatrixXd& M = data.capture[static_cast<std::size_t>(k)];
    for (Index t = 0; t < T; ++t)
      for (Index u = t + 1; u <= T; ++u) {
        const double c = M(t, u);
        if (c == 0) continue;
        if (Q(t, u) <= 0.0) return kNegInf;
        out += c * std::log(Q(t, u));
      }
  }
  return out;
}

double owl_count_loglik(std::span<const double> y, ConstSpan latent, double delta_jf, double delta_af, double eta,
                        double rho) {
  const int T = static_cast<int>(y.size());
  if (static_cast<Index>(latent.size()) != latent_dim(T)) throw ShapeError("owl_count_loglik: wrong latent length");
  double out = 0.0;
  for (int t = 1; t <= T && out != kNegInf; ++t) out = add(out, count_step(y, latent, t, delta_jf, delta_af, eta, rho));
  return out;
}

double owl_fecundity_loglik(const OwlData& data, double rho) {
  double out = 0.0;
  for (std::size_t t = 0; t < data.n_ch.size() && out != kNegInf; ++t)
    out = add(out, dens::poisson(data.n_ch[t], data.n_br[t] * rho));
  return out;
}

double owl_ipm_log_joint(const OwlData& data, ConstSpan theta) {
  const int T = data.T;
  // Global layout: alpha0, alpha2, rho, alpha1, alpha4, alpha5_2..T, alpha6, latents.
  const Index expected = 3 + 2 + (T - 1) + 1 + latent_dim(T);
  if (static_cast<Index>(theta.size()) != expected) throw ShapeError("owl_ipm_log_joint: wrong parameter length");
  const double a0 = theta[0], a2 = theta[1], rho = theta[2];
  const std::size_t psi1 = 3;
  const std::size_t a6_at = psi1 + 2 + static_cast<std::size_t>(T - 1);
  double out = add(alpha_prior(a0), alpha_prior(a2));
  out = add(out, rho_prior(rho));
  for (std::size_t k = psi1; k <= a6_at; ++k) out = add(out, alpha_prior(theta[k]));
  if (out == kNegInf) return kNegInf;
  std::vector<double> alpha{a0, a2};
  alpha.insert(alpha.end(), theta.begin() + static_cast<std::ptrdiff_t>(psi1), theta.begin() + static_cast<std::ptrdiff_t>(a6_at));
  out = add(out, owl_capture_loglik(data, alpha));
  out = add(out, owl_count_loglik(data.y, theta.subspan(a6_at + 1), dens::inv_logit(a0), dens::inv_logit(a0 + a2),
                                  std::exp(theta[a6_at]), rho));
  return add(out, owl_fecundity_loglik(data, rho));
}

std::vector<std::shared_ptr<const Submodel>> owl_submodels(const OwlData& data) {
  data.validate();
  return {std::make_shared<CaptureSubmodel>(data), std::make_shared<CountSubmodel>(data),
          std::make_shared<FecunditySubmodel>(data)};
}

ChainMeldedModel owl_build(const OwlData& data, std::vector<double> lambda) {
  PooledPriorSpec pooling;
  pooling.lambda = std::move(lambda);
  pooling.roles = {PoolRole::original, PoolRole::correction, PoolRole::original};
  return ChainMeldedModel(owl_submodels(data), std::move(pooling));
}

OwlData owl_simulate(const OwlParams& truth, int T, std::uint64_t seed) {
  if (T < 2) throw ConfigError("T must be at least 2");
  if (static_cast<int>(truth.alpha5.size()) != T - 1) throw ConfigError("truth.alpha5 must have T - 1 entries");
  const OwlRates r = owl_link(truth.alpha0, truth.alpha1, truth.alpha2, truth.alpha4, truth.alpha5, truth.alpha6, T);
  OwlData d;
  d.T = T;
  RandomStream base = RandomStream::derive(seed, {static_cast<std::uint64_t>(StreamPurpose::simulate)});

  RandomStream cap = base.child(1);
  for (int k = 0; k < 4; ++k) {
    MatrixXd m = MatrixXd::Zero(T, T + 1);
    const auto& pi = r.pi[static_cast<std::size_t>(k % 2)];
    for (int t = 1; t < T; ++t) {
      const auto released = 8 + static_cast<int>(cap.below(8));
      for (int i = 0; i < released; ++i) {
        int seen = T + 1;
        for (int u = t + 1; u <= T; ++u) {
          if (cap.uniform() >= r.delta[static_cast<std::size_t>(k)]) break;
          if (cap.uniform() < pi[static_cast<std::size_t>(u - 1)]) {
            seen = u;
            break;
          }
        }
        m(t - 1, seen - 1) += 1.0;
      }
    }
    d.capture[static_cast<std::size_t>(k)] = std::move(m);
  }

  RandomStream pop = base.child(2);
  const double dj = r.delta[static_cast<std::size_t>(owl_stratum(owl_juvenile, owl_female))];
  const double da = r.delta[static_cast<std::size_t>(owl_stratum(owl_adult, owl_female))];
  double x = truth.xj1 + truth.xa1;
  d.y.push_back(draw_poisson(x, pop));
  for (int t = 2; t <= T; ++t) {
    double next = 0;
    if (x > 0) {
      next += draw_poisson(x * truth.rho / 2.0 * dj, pop);
      next += draw_binomial(x, da, pop);
      next += draw_poisson(x * r.eta, pop);
    }
    x = next;
    d.y.push_back(x > 0 ? draw_poisson(x, pop) : 0.0);
  }

  RandomStream fec = base.child(3);
  for (int t = 1; t <= T; ++t) {
    const double nb = 8.0 + static_cast<double>(fec.below(13));
    d.n_br.push_back(nb);
    d.n_ch.push_back(draw_poisson(nb * truth.rho, fec));
  }
  d.validate();
  return d;
}

void write_owl_data(const std::filesystem::path& dir, const OwlData& data) {
  data.validate();
  std::filesystem::create_directories(dir);
  for (int a = 0; a < 2; ++a)
    for (int s = 0; s < 2; ++s) {
      const auto path = dir / (std::string("capture_") + age_tag(a) + "_" + sex_tag(s) + ".csv");
      std::ofstream out(path);
      if (!out) throw std::runtime_error("cannot write " + path.string());
      const MatrixXd& m = data.capture[static_cast<std::size_t>(owl_stratum(a, s))];
      for (Index t = 0; t < m.rows(); ++t) {
        for (Index u = 0; u < m.cols(); ++u) out << (u ? "," : "") << static_cast<long long>(m(t, u));
        out << '\n';
      }
    }
  std::ofstream counts(dir / "counts.csv");
  counts << "t,y\n";
  for (int t = 1; t <= data.T; ++t) counts << t << ',' << static_cast<long long>(data.y[static_cast<std::size_t>(t - 1)]) << '\n';
  std::ofstream fec(dir / "fecundity.csv");
  fec << "t,N_br,n_ch\n";
  for (int t = 1; t <= data.T; ++t)
    fec << t << ',' << static_cast<long long>(data.n_br[static_cast<std::size_t>(t - 1)]) << ','
        << static_cast<long long>(data.n_ch[static_cast<std::size_t>(t - 1)]) << '\n';
  if (!counts || !fec) throw std::runtime_error("cannot write owl data to " + dir.string());
}

OwlData read_owl_data(const std::filesystem::path& dir, int T) {
  OwlData d;
  const auto counts = read_numeric_csv(dir / "counts.csv", true);
  d.T = T > 0 ? T : static_cast<int>(counts.size());
  if (static_cast<int>(counts.size()) != d.T) throw ConfigError("counts.csv must have T rows");
  for (const auto& row : counts) {
    if (row.size() != 2) throw ConfigError("counts.csv rows must be (t, y)");
    d.y.push_back(row[1]);
  }
  const auto fec = read_numeric_csv(dir / "fecundity.csv", true);
  if (static_cast<int>(fec.size()) != d.T) throw ConfigError("fecundity.csv must have T rows");
  for (const auto& row : fec) {
    if (row.size() != 3) throw ConfigError("fecundity.csv rows must be (t, N_br, n_ch)");
    d.n_br.push_back(row[1]);
    d.n_ch.push_back(row[2]);
  }
  for (int a = 0; a < 2; ++a)
    for (int s = 0; s < 2; ++s) {
      const auto name = std::string("capture_") + age_tag(a) + "_" + sex_tag(s) + ".csv";
      const auto rows = read_numeric_csv(dir / name, false);
      MatrixXd m(d.T, d.T + 1);
      if (static_cast<int>(rows.size()) != d.T) throw ConfigError(name + " must have T rows");
      for (int t = 0; t < d.T; ++t) {
        if (static_cast<int>(rows[static_cast<std::size_t>(t)].size()) != d.T + 1)
          throw ConfigError(name + " rows must have T + 1 columns");
        for (int u = 0; u <= d.T; ++u) m(t, u) = rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(u)];
      }
      d.capture[static_cast<std::size_t>(owl_stratum(a, s))] = std::move(m);
    }
  d.validate();
  return d;
}

void write_owl_truth(const std::filesystem::path& path, const OwlParams& truth, int T, std::uint64_t seed) {
  nlohmann::json j = {{"T", T},
                      {"seed", seed},
                      {"alpha0", truth.alpha0},
                      {"alpha1", truth.alpha1},
                      {"alpha2", truth.alpha2},
                      {"alpha4", truth.alpha4},
                      {"alpha5", truth.alpha5},
                      {"alpha6", truth.alpha6},
                      {"rho", truth.rho},
                      {"xJ_1", truth.xj1},
                      {"xA_1", truth.xa1}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace dcmeld
