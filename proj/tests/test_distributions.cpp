#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "spqrx/distributions.hpp"
#include "spqrx/error.hpp"
#include "spqrx/rng.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

using namespace spqrx;

namespace {

// Beta(2, s) bulk on [0, 1] with closed-form cdf
// I_y(2, s) = 1 - (1-y)^(s+1) - (s+1) y (1-y)^s (integer or real s > 1).
class Beta2Bulk : public BulkDistribution {
 public:
  explicit Beta2Bulk(double s) : s_(s) {}
  double cdf(double y) const override {
    if (y <= 0.0) return 0.0;
    if (y >= 1.0) return 1.0;
    return 1.0 - std::pow(1.0 - y, s_ + 1.0) - (s_ + 1.0) * y * std::pow(1.0 - y, s_);
  }
  double pdf(double y) const override {
    if (y <= 0.0 || y >= 1.0) return 0.0;
    return s_ * (s_ + 1.0) * y * std::pow(1.0 - y, s_ - 1.0);
  }
  double quantile(double p) const override {
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

 private:
  double s_;
};

// Long right tail: w Beta(2, s) + (1 - w) Unif(0, 1).
class SkewedBulk : public BulkDistribution {
 public:
  SkewedBulk(double s, double w) : beta_(s), w_(w) {}
  double cdf(double y) const override {
    return w_ * beta_.cdf(y) + (1.0 - w_) * std::clamp(y, 0.0, 1.0);
  }
  double pdf(double y) const override {
    return w_ * beta_.pdf(y) + ((y > 0.0 && y < 1.0) ? 1.0 - w_ : 0.0);
  }
  double quantile(double p) const override {
    double lo = 0.0, hi = 1.0;
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      (cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  }

 private:
  Beta2Bulk beta_;
  double w_;
};

struct RandomCase {
  std::shared_ptr<Beta2Bulk> bulk;
  double xi;
  BlendSpec spec;
};

RandomCase random_case(Rng& rng) {
  const double s = 2.0 + 6.0 * rng.uniform();
  const double xi = -0.4 + 0.9 * rng.uniform();
  const double pa = 0.5 + 0.4 * rng.uniform();
  const double pb = pa + (0.995 - pa) * (0.1 + 0.9 * rng.uniform());
  const double c2 = 4.0 + 6.0 * rng.uniform();
  const double c1 = c2 + 20.0 * rng.uniform();
  return {std::make_shared<Beta2Bulk>(s), xi, BlendSpec(pa, pb, c1, c2)};
}

// Integral of the blended density over its whole support: Simpson on
// [0, a], on [a, b], and on the tail after the substitution
// y = b + scale (e^t - 1), which compresses heavy tails.
double total_mass(const BlendedGP& d) {
  const BlendGeometry& g = d.geometry();
  const auto pdf = [&](double y) { return d.pdf(y); };
  double mass = oracle::simpson(pdf, 0.0, g.a, 8192) + oracle::simpson(pdf, g.a, g.b, 8192);
  const GPParams tail = d.tail();
  const double top = tail.shape < 0.0 ? tail.upper_endpoint() : gp_quantile(1.0 - 1e-14, tail);
  const double scale = tail.scale;
  const double t_max = std::log1p((top - g.b) / scale);
  mass += oracle::simpson(
      [&](double t) { return d.pdf(g.b + scale * std::expm1(t)) * scale * std::exp(t); }, 0.0,
      t_max, 16384);
  return mass;
}

}  // namespace

// ----------------------------------------------------------------- GP

TEST_CASE("GP distribution values") {
  const GPParams exp1{0.0, 1.0, 0.0};
  CHECK(gp_cdf(0.0, exp1) == 0.0);
  CHECK(gp_cdf(1.0, exp1) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-15));
  CHECK(gp_cdf(5.0, {0.0, 1.0, 0.2}) == doctest::Approx(0.96875).epsilon(1e-14));
  CHECK(gp_pdf(0.0, {0.0, 2.0, 0.0}) == doctest::Approx(0.5));
  CHECK(gp_cdf(-1.0, exp1) == 0.0);
  CHECK(gp_cdf(10.0, {0.0, 1.0, -0.5}) == 1.0);  // above the endpoint 2
  CHECK(gp_pdf(10.0, {0.0, 1.0, -0.5}) == 0.0);
  CHECK_THROWS_AS(gp_cdf(1.0, {0.0, 0.0, 0.1}), ConfigError);
  CHECK_THROWS_AS(gp_cdf(1.0, {0.0, -1.0, 0.1}), ConfigError);
}

TEST_CASE("GP cdf at 5 agrees with quadrature of the density") {
  const GPParams gp{0.0, 1.0, 0.2};
  const double q = oracle::simpson([&](double y) { return gp_pdf(y, gp); }, 0.0, 5.0, 8192);
  CHECK(std::fabs(q - 0.96875) < 1e-10);
}

TEST_CASE("GP density integrates to one") {
  for (double xi : {-0.3, 0.0, 0.4}) {
    const GPParams gp{0.5, 1.5, xi};
    const double top = xi < 0.0 ? gp.upper_endpoint() : gp_quantile(1.0 - 1e-15, gp);
    const double t_max = std::log1p((top - gp.threshold) / gp.scale);
    const double mass = oracle::simpson(
        [&](double t) {
          return gp_pdf(gp.threshold + gp.scale * std::expm1(t), gp) * gp.scale * std::exp(t);
        },
        0.0, t_max, 16384);
    CHECK(std::fabs(mass - 1.0) < 1e-6);
  }
}

TEST_CASE("GP density is the derivative of the cdf") {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const GPParams gp{rng.uniform(), 0.2 + rng.uniform(), -0.4 + 0.9 * rng.uniform()};
    const double y = gp_quantile(0.02 + 0.95 * rng.uniform(), gp);
    const double fd = oracle::central_difference([&](double z) { return gp_cdf(z, gp); }, y, 1e-6);
    CHECK(oracle::relative_error(fd, gp_pdf(y, gp)) < 1e-5);
    CHECK(gp_log_pdf(y, gp) == doctest::Approx(std::log(gp_pdf(y, gp))).epsilon(1e-12));
  }
}

TEST_CASE("GP quantile") {
  CHECK(gp_quantile(0.0, {0.3, 1.0, 0.1}) == 0.3);
  CHECK(gp_quantile(1.0 - std::exp(-1.0), {0.0, 1.0, 0.0}) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(gp_quantile(1.0, {0.0, 1.0, -0.5}) == doctest::Approx(2.0));
  CHECK_THROWS_AS(gp_quantile(1.0, {0.0, 1.0, 0.2}), ConfigError);
  CHECK_THROWS_AS(gp_quantile(1.0, {0.0, 1.0, 0.0}), ConfigError);
  CHECK_THROWS_AS(gp_quantile(1.5, {0.0, 1.0, 0.0}), ConfigError);
  Rng rng(17);
  for (int i = 0; i < 1000; ++i) {
    const GPParams gp{-1.0 + 2.0 * rng.uniform(), 0.1 + 3.0 * rng.uniform(),
                      -0.8 + 1.6 * rng.uniform()};
    const double tau = rng.uniform();
    CHECK(std::fabs(gp_cdf(gp_quantile(tau, gp), gp) - tau) < 1e-10);
  }
}

TEST_CASE("GP expressions are continuous through xi = 0") {
  const GPParams zero{0.0, 1.3, 0.0}, tiny{0.0, 1.3, 1e-9};
  for (double y : {0.1, 1.0, 4.0, 20.0}) {
    CHECK(oracle::relative_error(gp_cdf(y, zero), gp_cdf(y, tiny)) < 1e-8);
    CHECK(oracle::relative_error(gp_pdf(y, zero), gp_pdf(y, tiny)) < 1e-6);
  }
}

// ------------------------------------------------------------- weights

TEST_CASE("blend spec validation") {
  CHECK_THROWS_AS(BlendSpec(0.9, 0.5, 10, 5), ConfigError);
  CHECK_THROWS_AS(BlendSpec(0.0, 0.5, 10, 5), ConfigError);
  CHECK_THROWS_AS(BlendSpec(0.5, 1.0, 10, 5), ConfigError);
  CHECK_THROWS_AS(BlendSpec(0.5, 0.9, 3.0, 5), ConfigError);
  CHECK_THROWS_AS(BlendSpec(0.5, 0.9, 5, 2.5), ConfigError);
  CHECK_NOTHROW(BlendSpec(0.5, 0.9, 5, 5));
}

TEST_CASE("blend weight endpoints and symmetry") {
  const BlendGeometry g{0.2, 0.7, 0.0, 1.0};
  const BlendSpec sym(0.5, 0.9, 7.0, 7.0);
  CHECK(blend_weight(0.2, g, sym) == 0.0);
  CHECK(blend_weight(0.7, g, sym) == 1.0);
  CHECK(blend_weight(0.1, g, sym) == 0.0);
  CHECK(blend_weight(0.9, g, sym) == 1.0);
  CHECK(blend_weight(0.45, g, sym) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(blend_weight_deriv(0.1, g, sym) == 0.0);
  CHECK(blend_weight_deriv(0.8, g, sym) == 0.0);
  const BlendGeometry bad{0.5, 0.5, 0.0, 1.0};
  CHECK_THROWS_AS(blend_weight(0.5, bad, sym), ConfigError);
}

TEST_CASE("blend weight matches quadrature of the Beta(25, 5) density") {
  const BlendGeometry g{1.0, 3.0, 0.0, 1.0};
  const BlendSpec spec(0.5, 0.9, 25.0, 5.0);
  const double log_b = std::lgamma(25.0) + std::lgamma(5.0) - std::lgamma(30.0);
  const auto dens = [&](double z) {
    return std::exp(24.0 * std::log(z) + 4.0 * std::log1p(-z) - log_b);
  };
  const double q = oracle::simpson(dens, 1e-300, 0.5, 8192);
  CHECK(std::fabs(blend_weight(2.0, g, spec) - q) < 1e-8);
}

TEST_CASE("blend weight derivative") {
  const BlendGeometry g{1.0, 3.0, 0.0, 1.0};
  const BlendSpec spec(0.5, 0.9, 25.0, 5.0);
  for (double y = 1.05; y < 2.96; y += 0.05) {
    const double fd =
        oracle::central_difference([&](double z) { return blend_weight(z, g, spec); }, y, 1e-6);
    CHECK(oracle::relative_error(fd, blend_weight_deriv(y, g, spec), 1e-10) < 1e-4);
  }
  const double mass =
      oracle::simpson([&](double y) { return blend_weight_deriv(y, g, spec); }, 1.0, 3.0, 8192);
  CHECK(std::fabs(mass - 1.0) < 1e-6);
}

// --------------------------------------------------------------- match

TEST_CASE("gp_match reproduces the blending levels") {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const double a = rng.uniform();
    const double b = a + 0.01 + rng.uniform();
    const double pa = 0.3 + 0.6 * rng.uniform();
    const double pb = pa + (0.999 - pa) * (0.05 + 0.95 * rng.uniform());
    const BlendSpec spec(pa, pb, 10.0, 5.0);
    const double xi = -0.6 + 1.3 * rng.uniform();
    const TailMatch m = gp_match(a, b, spec, xi);
    const GPParams gp{m.u_tilde, m.sigma_tilde, xi};
    CHECK(m.sigma_tilde > 0.0);
    CHECK(m.u_tilde < a);
    CHECK(std::fabs(gp_cdf(a, gp) - pa) < 1e-10);
    CHECK(std::fabs(gp_cdf(b, gp) - pb) < 1e-10);
  }
  const BlendSpec spec(0.5, 0.99, 5.0, 5.0);
  const TailMatch neg = gp_match(0.3, 0.6, spec, -0.2);
  CHECK(neg.u_tilde - neg.sigma_tilde / -0.2 > 0.6);
  CHECK_THROWS_AS(gp_match(0.5, 0.5, spec, 0.1), ConfigError);
}

TEST_CASE("gp_match is continuous through xi = 0") {
  const BlendSpec spec(0.8, 0.99, 10.0, 5.0);
  const TailMatch m0 = gp_match(0.4, 0.7, spec, 0.0);
  const TailMatch m1 = gp_match(0.4, 0.7, spec, 1e-9);
  CHECK(oracle::relative_error(m0.sigma_tilde, m1.sigma_tilde) < 1e-6);
  CHECK(oracle::relative_error(m0.u_tilde, m1.u_tilde) < 1e-6);
  // Exponential tail: F(a) = p_a with u = a + sigma log(1 - p_a).
  CHECK(m0.u_tilde == doctest::Approx(0.4 + m0.sigma_tilde * std::log(1.0 - 0.8)).epsilon(1e-12));
}

// ------------------------------------------------------------- blended

TEST_CASE("blended distribution regimes") {
  auto bulk = std::make_shared<Beta2Bulk>(5.0);
  const BlendSpec spec(0.7, 0.98, 25.0, 5.0);
  const BlendedGP d(bulk, 0.15, spec);
  const BlendGeometry& g = d.geometry();
  CHECK(g.a == doctest::Approx(bulk->quantile(0.7)));
  CHECK(g.b == doctest::Approx(bulk->quantile(0.98)));
  CHECK(g.u_tilde < g.a);
  for (double y : {0.01, g.u_tilde, 0.5 * (g.u_tilde + g.a), g.a}) {
    CHECK(d.cdf(y) == bulk->cdf(y));
    CHECK(d.pdf(y) == bulk->pdf(y));
  }
  for (double y : {g.b, g.b + 0.1, 1.0, 3.0, 50.0}) {
    CHECK(d.cdf(y) == gp_cdf(y, d.tail()));
    CHECK(d.survival(y) == gp_survival(y, d.tail()));
    CHECK(d.pdf(y) == gp_pdf(y, d.tail()));
  }
  CHECK(d.quantile(0.7) == doctest::Approx(g.a).epsilon(1e-12));
  CHECK(d.quantile(0.98) == doctest::Approx(g.b).epsilon(1e-12));
  CHECK(bgp_cdf(0.5, *bulk, 0.15, spec) == d.cdf(0.5));
  CHECK(bgp_pdf(0.5, *bulk, 0.15, spec) == d.pdf(0.5));
  CHECK(bgp_quantile(0.9, *bulk, 0.15, spec) == d.quantile(0.9));
}

TEST_CASE("random parameterizations: continuity, exact tail, normalization, monotonicity") {
  Rng rng(99);
  int valid = 0;
  for (int rep = 0; rep < 60; ++rep) {
    const RandomCase c = random_case(rng);
    const BlendedGP d(c.bulk, c.xi, c.spec);
    const BlendGeometry& g = d.geometry();
    for (double knot : {g.u_tilde, g.a, g.b}) {
      const double h = 1e-12 * std::max(1.0, std::fabs(knot));
      CHECK(std::fabs(d.cdf(knot + h) - d.cdf(knot - h)) < 1e-9);
    }
    for (double y = g.b; y < g.b + 5.0; y += 0.25) {
      CHECK(d.survival(y) == gp_survival(y, d.tail()));
    }
    if (validity_penalty(*c.bulk, c.xi, c.spec) > 0.0) continue;
    ++valid;
    CHECK(std::fabs(total_mass(d) - 1.0) < 1e-6);
    double prev = 0.0;
    const double top = c.xi < 0.0 ? d.tail().upper_endpoint() : g.b + 10.0;
    for (int i = 0; i <= 10000; ++i) {
      const double y = top * i / 10000.0;
      const double v = d.cdf(y);
      CHECK(v >= prev - 1e-15);
      prev = v;
    }
  }
  CHECK(valid > 30);
}

TEST_CASE("blended density is the derivative of the blended cdf") {
  Rng rng(12);
  int checked = 0;
  for (int rep = 0; rep < 30; ++rep) {
    const RandomCase c = random_case(rng);
    const BlendedGP d(c.bulk, c.xi, c.spec);
    const BlendGeometry& g = d.geometry();
    for (int i = 1; i < 40; ++i) {
      const double y = g.a * 0.5 + (g.b + 0.5 * (g.b - g.a) - g.a * 0.5) * i / 40.0;
      if (std::fabs(y - g.a) < 1e-4 || std::fabs(y - g.b) < 1e-4) continue;
      const double f = d.pdf(y);
      if (std::fabs(f) < 1e-6) continue;
      const double fd =
          oracle::central_difference([&](double z) { return d.cdf(z); }, y, 1e-7 * (g.b - g.a));
      CHECK(oracle::relative_error(fd, f) < 1e-4);
      if (f > 1e-12) CHECK(std::fabs(d.log_pdf(y) - std::log(f)) < 1e-8);
      ++checked;
    }
  }
  CHECK(checked > 500);
}

TEST_CASE("blended quantile round trips") {
  Rng rng(31);
  for (int rep = 0; rep < 40; ++rep) {
    const RandomCase c = random_case(rng);
    if (validity_penalty(*c.bulk, c.xi, c.spec) > 0.0) continue;
    const BlendedGP d(c.bulk, c.xi, c.spec);
    for (int i = 0; i < 25; ++i) {
      const double tau = c.spec.p_a() + (c.spec.p_b() - c.spec.p_a()) * rng.uniform();
      CHECK(std::fabs(d.cdf(d.quantile(tau)) - tau) < 1e-8);
    }
    for (double tau : {0.999, 0.9999}) {
      CHECK(std::fabs(d.cdf(d.quantile(tau)) - tau) < 1e-10);
    }
  }
}

TEST_CASE("validity penalty") {
  auto bulk = std::make_shared<Beta2Bulk>(3.0);
  CHECK(validity_penalty(*bulk, 0.2, BlendSpec(0.25, 0.9, 25.0, 5.0)) == 0.0);
  CHECK_THROWS_AS(validity_penalty(*bulk, 0.2, BlendSpec(0.25, 0.9, 25.0, 5.0), 8), ConfigError);

  // A sharply right-skewed bulk with a bounded GP tail and a wide blending
  // interval yields a negative blended density somewhere in [a, b].
  auto skewed = std::make_shared<SkewedBulk>(30.0, 0.93);
  const BlendSpec wide(0.5, 0.99, 5.0, 5.0);
  const double pen = validity_penalty(*skewed, -0.2, wide);
  CHECK(pen > 0.0);
  // Oracle: Riemann sum of max(0, -h) over the documented grid.
  const BlendedGP d(skewed, -0.2, wide);
  const BlendGeometry& g = d.geometry();
  const double cell = (g.b - g.a) / (128 - 3);
  double sum = 0.0;
  for (int i = 0; i < 128; ++i) sum += std::max(0.0, -d.pdf(g.a + (i - 1) * cell));
  CHECK(pen == doctest::Approx(sum * cell).epsilon(1e-12));
  // Each of the remedies removes the violation: a positive shape, a blend
  // weight concentrated near b, or a narrower blending interval.
  CHECK(validity_penalty(*skewed, 0.1, wide) == 0.0);
  CHECK(validity_penalty(*skewed, -0.2, BlendSpec(0.5, 0.99, 100.0, 5.0)) == 0.0);
  CHECK(validity_penalty(*skewed, -0.2, BlendSpec(0.5, 0.75, 5.0, 5.0)) == 0.0);
}
