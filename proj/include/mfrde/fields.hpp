#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mfrde/controlled.hpp"

namespace mfrde {

// Builtin coefficient fields. All act componentwise with d = m (diagonal
// structure F^{ij} = delta_{ij} phi_i), which keeps the tensor calculus easy
// to cross-check by hand while still exercising every derivative path.
//
//   constant        phi_i = c
//   linear-x        phi_i = sigma x_i
//   mean            phi_i = sigma mean_i(mu)
//   g-of-mean       phi_i = g(x_i, mean_i(mu)), g selected by params:
//                     bilinear: g(x, u) = x (a + b u)
//                     sin:      g(x, u) = a sin(x + c u) + b
//   conv-kernel     phi_i = int f(x_i, y_i) mu(dy), f(x, y) = a tanh(x - c y)
//   second-moment   phi_i = int |y|^2 mu(dy)   (derivative checker example;
//                                              unbounded, not solver grade)

std::unique_ptr<MeanFieldField> make_constant_field(Index d, Index m, double value);
std::unique_ptr<MeanFieldField> make_linear_x_field(Index d, double sigma = 1.0);
std::unique_ptr<MeanFieldField> make_mean_field(Index d, double sigma = 1.0);
std::unique_ptr<MeanFieldField> make_g_of_mean_field(Index d, const std::string& form,
                                                     double a = 1.0, double b = 1.0,
                                                     double c = 1.0);
std::unique_ptr<MeanFieldField> make_conv_kernel_field(Index d, double a = 1.0, double c = 1.0);
std::unique_ptr<MeanFieldField> make_second_moment_field(Index d);

std::vector<std::string> builtin_field_names();

}  // namespace mfrde
