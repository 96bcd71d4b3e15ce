#pragma once

namespace ulre {

// Special functions on the positive real axis. All throw DomainError for
// x <= 0 or non-finite x.

// ln Gamma(x). Shifts x up to >= 10 with the recurrence, then applies the
// Stirling series.
double lgamma(double x);

// psi(x) = d/dx ln Gamma(x). Recurrence to x >= 6, then the asymptotic series.
double digamma(double x);

// psi'(x), needed for the gradient of the Dirichlet KL term.
double trigamma(double x);

}  // namespace ulre
