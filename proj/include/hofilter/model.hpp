#pragma once

// Model layer: coefficient evaluators (f, sigma, h), initial law, and the
// operator oracle computing L^alpha applied to the sensor components and to
// <h,h>(x) = sum_i h_i(x)^2. L^0 is the generator-type operator, L^r (r >= 1)
// the diffusion-directional derivative, L^alpha their composition with the
// first letter outermost.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

#include "hofilter/linalg.hpp"
#include "hofilter/multi_index.hpp"

namespace hofilter {

struct OperatorTarget {
    enum Kind { sensor, hh } kind = sensor;
    int component = 0; // 0-based sensor component, ignored for hh

    static OperatorTarget sensor_component(int i) { return {sensor, i}; }
    static OperatorTarget hh_target() { return {hh, 0}; }
};

struct OperatorOracle {
    int max_order = 0; // maximal |alpha| supported
    int d_V = 0;
    int d_Y = 0;
    std::function<double(const MultiIndex&, int, const Vec&)> apply_to_sensor; // (alpha, i, x)
    std::function<double(const MultiIndex&, const Vec&)> apply_to_hh;
    // Optional fast path filling whole coefficient tables at one x:
    //   Lh[a * d_Y + i] = L^{alpha_a} h_i(x),  Lhh[a] = L^{alpha_a} <h,h>(x)
    // for every alpha_a in the set (enumeration order). Falls back to the
    // single-entry evaluators when absent.
    std::function<void(const IndexSet&, const Vec&, double*, double*)> batch;
};

double apply_operator(const OperatorOracle& oracle, const MultiIndex& alpha,
                      const OperatorTarget& target, const Vec& x);

void eval_operator_tables(const OperatorOracle& oracle, const IndexSet& set, const Vec& x,
                          double* Lh, double* Lhh);

struct InitialLaw {
    enum Kind { point, gaussian } kind = point;
    Vec mean;
    Mat cov;       // gaussian only
    Mat chol;      // cached lower factor of cov

    static InitialLaw point_mass(Vec x0);
    static InitialLaw gaussian_law(Vec mean, Mat cov);

    Vec sample(std::uint64_t seed, std::uint64_t sample_index) const;
};

struct LinearGaussianParams {
    Mat A, B, H;
    Vec mean_0;
    Mat cov_0;
};

struct ModelSpec {
    std::string name;
    int d_X = 0, d_V = 0, d_Y = 0;
    std::function<Vec(const Vec&)> drift;
    std::function<Mat(const Vec&)> diffusion;
    std::function<Vec(const Vec&)> sensor;
    InitialLaw initial_law;
    OperatorOracle operator_oracle;
    std::optional<LinearGaussianParams> linear_gaussian_params;
    // Optional allocation-free Euler kernel for the Monte Carlo hot loops:
    // overwrites x (length d_X) with x + f(x) dt + sigma(x) dV. Semantically
    // identical to going through drift/diffusion; shipped models provide it.
    std::function<void(double*, double, const double*)> euler_step;
};

struct Coefficients {
    Vec f;
    Mat sigma;
    Vec h;
};

Coefficients eval_coefficients(const ModelSpec& model, const Vec& x);

// Shipped models ------------------------------------------------------------

// dX = A X dt + B dV, Y-rate H X. Oracle is exact quadratic-form algebra.
ModelSpec make_linear_gaussian(Mat A, Mat B, Mat H, InitialLaw law, int max_order = 3);
ModelSpec make_linear_gaussian_scalar(double a, double b, double c, InitialLaw law,
                                      int max_order = 3);

// f(x) = -x/(1+x^2), sigma(x) = 1 + 1/(2(1+x^2)), h(x) = tanh(x); everything
// bounded with bounded derivatives. Closed forms for |alpha| <= 1, truncated
// Taylor-series (jet) arithmetic above that.
ModelSpec make_bounded_sensor(InitialLaw law, int max_order = 3);

// Same dynamics as the bounded-sensor model but h identically zero, so the
// likelihood is constant; used to exercise no-information edge cases.
ModelSpec make_zero_sensor(InitialLaw law, int max_order = 3);

// Generic finite-difference oracle over a model's raw evaluators. Innermost /
// single applications use step = cbrt(eps)*(1+|x|); strictly nested
// applications get level-graded larger steps so outer differences do not
// amplify inner rounding noise.
OperatorOracle make_fd_oracle(const ModelSpec& model, int max_order);

} // namespace hofilter
