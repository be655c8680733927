#pragma once

namespace spqrx {

// log B(a, b).
double log_beta(double a, double b);

// Regularized incomplete beta I_x(a, b), i.e. the Beta(a, b) distribution
// function. Evaluated by Lentz's continued fraction on whichever of x and
// 1 - x gives the faster-converging expansion. log_beta_ab = log B(a, b)
// may be passed in to skip the lgamma calls.
double beta_cdf(double x, double a, double b);
double beta_cdf(double x, double a, double b, double log_beta_ab);

// Beta(a, b) density and its derivative in x. Zero outside (0, 1).
double beta_pdf(double x, double a, double b, double log_beta_ab);
double beta_pdf_deriv(double x, double a, double b, double log_beta_ab);

// Standard normal quantile.
double normal_quantile(double p);

}  // namespace spqrx
