#include "hofilter/model.hpp"

#include <cfloat>
#include <cmath>
#include <map>
#include <memory>

#include "hofilter/rng.hpp"

namespace hofilter {

namespace {

void check_alpha(const OperatorOracle& oracle, const MultiIndex& alpha) {
    if (mi_length(alpha) > oracle.max_order)
        throw CapabilityError("apply_operator: |alpha| = " + std::to_string(mi_length(alpha)) +
                              " exceeds oracle max_order " + std::to_string(oracle.max_order));
    for (int e : alpha.entries)
        if (e < 0 || e > oracle.d_V)
            throw RejectedInput("apply_operator: multi-index entry " + std::to_string(e) +
                                " outside {0,...," + std::to_string(oracle.d_V) + "}");
}

} // namespace

double apply_operator(const OperatorOracle& oracle, const MultiIndex& alpha,
                      const OperatorTarget& target, const Vec& x) {
    check_alpha(oracle, alpha);
    if (target.kind == OperatorTarget::hh) return oracle.apply_to_hh(alpha, x);
    if (target.component < 0 || target.component >= oracle.d_Y)
        throw RejectedInput("apply_operator: sensor component out of range");
    return oracle.apply_to_sensor(alpha, target.component, x);
}

void eval_operator_tables(const OperatorOracle& oracle, const IndexSet& set, const Vec& x,
                          double* Lh, double* Lhh) {
    if (set.max_len > oracle.max_order)
        throw CapabilityError("eval_operator_tables: index set exceeds oracle max_order");
    if (oracle.batch) {
        oracle.batch(set, x, Lh, Lhh);
        return;
    }
    for (std::size_t a = 0; a < set.size(); ++a) {
        for (int i = 0; i < oracle.d_Y; ++i)
            Lh[a * std::size_t(oracle.d_Y) + i] = oracle.apply_to_sensor(set.indices[a], i, x);
        Lhh[a] = oracle.apply_to_hh(set.indices[a], x);
    }
}

// --------------------------------------------------------------------------
// initial law

InitialLaw InitialLaw::point_mass(Vec x0) {
    InitialLaw l;
    l.kind = point;
    l.mean = std::move(x0);
    return l;
}

InitialLaw InitialLaw::gaussian_law(Vec mean, Mat cov) {
    if (cov.rows != mean.size() || cov.cols != mean.size())
        throw RejectedInput("InitialLaw: covariance shape does not match mean");
    InitialLaw l;
    l.kind = gaussian;
    l.mean = std::move(mean);
    l.chol = cholesky(cov);
    l.cov = std::move(cov);
    return l;
}

Vec InitialLaw::sample(std::uint64_t seed, std::uint64_t sample_index) const {
    if (kind == point) return mean;
    const std::size_t d = mean.size();
    Vec z(d), x = mean;
    NormalLane lane(seed, stream_initial_state, sample_index);
    lane.fill(0, z.data(), d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j <= i; ++j) x[i] += chol(i, j) * z[j];
    return x;
}

Coefficients eval_coefficients(const ModelSpec& model, const Vec& x) {
    if (int(x.size()) != model.d_X)
        throw RejectedInput("eval_coefficients: x has length " + std::to_string(x.size()) +
                            ", expected " + std::to_string(model.d_X));
    Coefficients c{model.drift(x), model.diffusion(x), model.sensor(x)};
    if (int(c.f.size()) != model.d_X || int(c.h.size()) != model.d_Y ||
        int(c.sigma.rows) != model.d_X || int(c.sigma.cols) != model.d_V)
        throw RejectedInput("eval_coefficients: evaluator output has wrong shape");
    return c;
}

// --------------------------------------------------------------------------
// quadratic-form backend: g(x) = x'Qx + b'x + c is closed under L^0 and L^r
// when drift is Ax and diffusion the constant B, so every L^alpha is exact.

namespace {

struct Quad {
    Mat Q;
    Vec b;
    double c = 0.0;
};

Quad quad_apply(int r, const Quad& g, const Mat& A, const Mat& B, const Mat& BBt) {
    const std::size_t d = g.b.size();
    Mat Qbar(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) Qbar(i, j) = g.Q(i, j) + g.Q(j, i);
    Quad out;
    out.Q = Mat(d, d);
    out.b = Vec(d, 0.0);
    if (r == 0) {
        out.Q = matmul(transpose(A), Qbar);
        out.b = matvec(transpose(A), g.b);
        out.c = 0.5 * trace(matmul(BBt, Qbar));
    } else {
        Vec col(d);
        for (std::size_t i = 0; i < d; ++i) col[i] = B(i, std::size_t(r - 1));
        out.b = matvec(Qbar, col);
        out.c = dot(col, g.b);
    }
    return out;
}

double quad_value(const Quad& g, const Vec& x) {
    double v = g.c + dot(g.b, x);
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j) v += x[i] * g.Q(i, j) * x[j];
    return v;
}

// fold L^alpha over a quadratic form: innermost application is the last letter
double quad_eval(const MultiIndex& alpha, Quad g, const Mat& A, const Mat& B, const Mat& BBt,
                 const Vec& x) {
    for (int i = mi_length(alpha) - 1; i >= 0; --i)
        g = quad_apply(alpha.entries[std::size_t(i)], g, A, B, BBt);
    return quad_value(g, x);
}

} // namespace

ModelSpec make_linear_gaussian(Mat A, Mat B, Mat H, InitialLaw law, int max_order) {
    const int d_X = int(A.rows), d_V = int(B.cols), d_Y = int(H.rows);
    if (A.cols != A.rows || B.rows != A.rows || H.cols != A.rows)
        throw RejectedInput("make_linear_gaussian: inconsistent matrix shapes");
    if (int(law.mean.size()) != d_X)
        throw RejectedInput("make_linear_gaussian: initial law dimension mismatch");

    ModelSpec m;
    m.name = d_X == 1 ? "linear_gaussian" : "linear_gaussian_" + std::to_string(d_X) + "d";
    m.d_X = d_X;
    m.d_V = d_V;
    m.d_Y = d_Y;
    m.drift = [A](const Vec& x) { return matvec(A, x); };
    m.diffusion = [B](const Vec&) { return B; };
    m.sensor = [H](const Vec& x) { return matvec(H, x); };
    m.initial_law = law;
    if (d_X == 1 && d_V == 1) {
        const double a = A(0, 0), bb = B(0, 0);
        m.euler_step = [a, bb](double* x, double dt, const double* dV) {
            x[0] += a * x[0] * dt + bb * dV[0];
        };
    } else if (d_X <= 8) {
        m.euler_step = [A, B, d_X, d_V](double* x, double dt, const double* dV) {
            double nx[8];
            for (int i = 0; i < d_X; ++i) {
                double s = x[i];
                for (int j = 0; j < d_X; ++j) s += A(std::size_t(i), std::size_t(j)) * x[j] * dt;
                for (int r = 0; r < d_V; ++r) s += B(std::size_t(i), std::size_t(r)) * dV[r];
                nx[i] = s;
            }
            for (int i = 0; i < d_X; ++i) x[i] = nx[i];
        };
    }

    LinearGaussianParams p;
    p.A = A;
    p.B = B;
    p.H = H;
    p.mean_0 = law.mean;
    p.cov_0 = law.kind == InitialLaw::gaussian ? law.cov : Mat(std::size_t(d_X), std::size_t(d_X));
    m.linear_gaussian_params = p;

    const Mat BBt = matmul(B, transpose(B));

    // base forms: h_i linear, <h,h> quadratic with Q = H'H
    std::vector<Quad> hq(static_cast<std::size_t>(d_Y));
    for (int i = 0; i < d_Y; ++i) {
        hq[std::size_t(i)].Q = Mat(std::size_t(d_X), std::size_t(d_X));
        hq[std::size_t(i)].b = Vec(std::size_t(d_X));
        for (int j = 0; j < d_X; ++j) hq[std::size_t(i)].b[std::size_t(j)] = H(std::size_t(i), std::size_t(j));
    }
    Quad hhq;
    hhq.Q = matmul(transpose(H), H);
    hhq.b = Vec(std::size_t(d_X), 0.0);

    OperatorOracle o;
    o.max_order = max_order;
    o.d_V = d_V;
    o.d_Y = d_Y;
    o.apply_to_sensor = [A, B, BBt, hq](const MultiIndex& alpha, int i, const Vec& x) {
        return quad_eval(alpha, hq[std::size_t(i)], A, B, BBt, x);
    };
    o.apply_to_hh = [A, B, BBt, hhq](const MultiIndex& alpha, const Vec& x) {
        return quad_eval(alpha, hhq, A, B, BBt, x);
    };

    if (d_X == 1 && d_V == 1 && d_Y == 1) {
        // scalar fast path used by the hot Monte Carlo loops: a quadratic
        // q2 x^2 + q1 x + q0 maps under L^0 to (2a q2, a q1, b^2 q2) and under
        // L^1 to (0, 2b q2, b q1)
        const double a = A(0, 0), b = B(0, 0), c = H(0, 0);
        o.batch = [a, b, c](const IndexSet& set, const Vec& x, double* Lh, double* Lhh) {
            if (set.max_len > 6)
                throw CapabilityError("linear_gaussian batch: index set too deep");
            const std::size_t n = set.size();
            // DP over the left truncation: words are length-sorted, and the
            // set with d_V=1 lists (0) before (1), (0,0),(0,1),(1,0),(1,1), ...
            // left parent of word id>=1 at length L: need its position; for
            // d_V=1 the suffix of a word w (binary digits) of length L has
            // position first_of(L-1) + (w & (2^{L-1}-1)).
            double q2h[128], q1h[128], q0h[128];
            double q2s[128], q1s[128], q0s[128];
            std::size_t first[16];
            first[0] = 0;
            for (int len = 1; len <= set.max_len + 1; ++len)
                first[len] = first[len - 1] + (std::size_t(1) << (len - 1));
            q2h[0] = 0.0; q1h[0] = c; q0h[0] = 0.0;       // h = c x
            q2s[0] = c * c; q1s[0] = 0.0; q0s[0] = 0.0;   // <h,h> = c^2 x^2
            std::size_t id = 1;
            for (int len = 1; len <= set.max_len; ++len) {
                const std::size_t cnt = std::size_t(1) << len;
                for (std::size_t w = 0; w < cnt; ++w, ++id) {
                    const int letter = int(w >> (len - 1));            // first letter
                    const std::size_t par = first[len - 1] + (w & ((std::size_t(1) << (len - 1)) - 1));
                    if (letter == 0) {
                        q2h[id] = 2.0 * a * q2h[par]; q1h[id] = a * q1h[par]; q0h[id] = b * b * q2h[par];
                        q2s[id] = 2.0 * a * q2s[par]; q1s[id] = a * q1s[par]; q0s[id] = b * b * q2s[par];
                    } else {
                        q2h[id] = 0.0; q1h[id] = 2.0 * b * q2h[par]; q0h[id] = b * q1h[par];
                        q2s[id] = 0.0; q1s[id] = 2.0 * b * q2s[par]; q0s[id] = b * q1s[par];
                    }
                }
            }
            const double xv = x[0];
            for (std::size_t k = 0; k < n; ++k) {
                Lh[k] = (q2h[k] * xv + q1h[k]) * xv + q0h[k];
                Lhh[k] = (q2s[k] * xv + q1s[k]) * xv + q0s[k];
            }
        };
    }
    m.operator_oracle = o;
    return m;
}

ModelSpec make_linear_gaussian_scalar(double a, double b, double c, InitialLaw law, int max_order) {
    Mat A(1, 1), B(1, 1), H(1, 1);
    A(0, 0) = a;
    B(0, 0) = b;
    H(0, 0) = c;
    return make_linear_gaussian(A, B, H, std::move(law), max_order);
}

// --------------------------------------------------------------------------
// bounded-sensor model: univariate, smooth, everything bounded.
// |alpha| <= 1 by hand; beyond that, truncated Taylor-series (jet) arithmetic
// at the evaluation point — still exact up to rounding, no differencing.

namespace {

struct Jet {
    std::vector<double> c; // c[k] = g^{(k)}(x0)/k!
};

Jet jet_mul(const Jet& a, const Jet& b) {
    const std::size_t n = std::min(a.c.size(), b.c.size());
    Jet r;
    r.c.assign(n, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i <= k; ++i) s += a.c[i] * b.c[k - i];
        r.c[k] = s;
    }
    return r;
}

Jet jet_deriv(const Jet& a) {
    Jet r;
    if (a.c.size() <= 1) { r.c.assign(1, 0.0); return r; }
    r.c.resize(a.c.size() - 1);
    for (std::size_t k = 0; k + 1 < a.c.size(); ++k) r.c[k] = double(k + 1) * a.c[k + 1];
    return r;
}

Jet jet_add(const Jet& a, const Jet& b) {
    const std::size_t n = std::min(a.c.size(), b.c.size());
    Jet r;
    r.c.resize(n);
    for (std::size_t k = 0; k < n; ++k) r.c[k] = a.c[k] + b.c[k];
    return r;
}

Jet jet_scale(Jet a, double s) {
    for (double& v : a.c) v *= s;
    return a;
}

Jet jet_recip(const Jet& a) {
    Jet r;
    r.c.assign(a.c.size(), 0.0);
    r.c[0] = 1.0 / a.c[0];
    for (std::size_t k = 1; k < a.c.size(); ++k) {
        double s = 0.0;
        for (std::size_t i = 1; i <= k; ++i) s += a.c[i] * r.c[k - i];
        r.c[k] = -s * r.c[0];
    }
    return r;
}

Jet jet_tanh(double x0, std::size_t order) {
    // T' = 1 - T^2, built coefficient by coefficient
    Jet t;
    t.c.assign(order + 1, 0.0);
    t.c[0] = std::tanh(x0);
    for (std::size_t k = 0; k + 1 <= order; ++k) {
        double sq = 0.0; // coefficient k of T^2, uses c[0..k] only
        for (std::size_t i = 0; i <= k; ++i) sq += t.c[i] * t.c[k - i];
        t.c[k + 1] = ((k == 0 ? 1.0 : 0.0) - sq) / double(k + 1);
    }
    return t;
}

struct BoundedBase {
    Jet f, sigma, sigma2, h, hh;
};

BoundedBase bounded_jets(double x0, std::size_t order) {
    Jet x;
    x.c.assign(order + 1, 0.0);
    x.c[0] = x0;
    if (order >= 1) x.c[1] = 1.0;
    Jet u;
    u.c.assign(order + 1, 0.0);
    u.c[0] = 1.0 + x0 * x0;
    if (order >= 1) u.c[1] = 2.0 * x0;
    if (order >= 2) u.c[2] = 1.0;
    const Jet inv = jet_recip(u);

    BoundedBase b;
    b.f = jet_scale(jet_mul(x, inv), -1.0);
    b.sigma = jet_scale(inv, 0.5);
    b.sigma.c[0] += 1.0;
    b.sigma2 = jet_mul(b.sigma, b.sigma);
    b.h = jet_tanh(x0, order);
    b.hh = jet_mul(b.h, b.h);
    return b;
}

Jet bounded_apply_letter(int r, const Jet& g, const BoundedBase& base) {
    const Jet g1 = jet_deriv(g);
    if (r != 0) return jet_mul(base.sigma, g1);
    const Jet g2 = jet_deriv(g1);
    return jet_add(jet_mul(base.f, g1), jet_scale(jet_mul(base.sigma2, g2), 0.5));
}

// closed forms for |alpha| <= 1; jets above
double bounded_eval(const MultiIndex& alpha, bool want_hh, double x) {
    const int len = mi_length(alpha);
    const double T = std::tanh(x);
    if (len <= 1) {
        const double u = 1.0 + x * x;
        const double f = -x / u;
        const double s = 1.0 + 0.5 / u;
        const double w = 1.0 - T * T;
        if (len == 0) return want_hh ? T * T : T;
        if (alpha.entries[0] == 0)
            return want_hh ? 2.0 * f * T * w + s * s * w * (1.0 - 3.0 * T * T)
                           : w * (f - s * s * T);
        return want_hh ? 2.0 * s * T * w : s * w;
    }
    const std::size_t order = 2 * std::size_t(len) + 2;
    const BoundedBase base = bounded_jets(x, order);
    Jet g = want_hh ? base.hh : base.h;
    for (int i = len - 1; i >= 0; --i) g = bounded_apply_letter(alpha.entries[std::size_t(i)], g, base);
    return g.c[0];
}

ModelSpec bounded_dynamics(InitialLaw law) {
    ModelSpec m;
    m.d_X = 1;
    m.d_V = 1;
    m.d_Y = 1;
    m.drift = [](const Vec& x) { return Vec{-x[0] / (1.0 + x[0] * x[0])}; };
    m.diffusion = [](const Vec& x) {
        Mat s(1, 1);
        s(0, 0) = 1.0 + 0.5 / (1.0 + x[0] * x[0]);
        return s;
    };
    m.euler_step = [](double* x, double dt, const double* dV) {
        const double u = 1.0 + x[0] * x[0];
        x[0] += (-x[0] / u) * dt + (1.0 + 0.5 / u) * dV[0];
    };
    m.initial_law = std::move(law);
    return m;
}

} // namespace

ModelSpec make_bounded_sensor(InitialLaw law, int max_order) {
    ModelSpec m = bounded_dynamics(std::move(law));
    m.name = "bounded_sensor";
    m.sensor = [](const Vec& x) { return Vec{std::tanh(x[0])}; };

    OperatorOracle o;
    o.max_order = max_order;
    o.d_V = 1;
    o.d_Y = 1;
    o.apply_to_sensor = [](const MultiIndex& alpha, int, const Vec& x) {
        return bounded_eval(alpha, false, x[0]);
    };
    o.apply_to_hh = [](const MultiIndex& alpha, const Vec& x) {
        return bounded_eval(alpha, true, x[0]);
    };
    o.batch = [](const IndexSet& set, const Vec& x, double* Lh, double* Lhh) {
        const double xv = x[0];
        const double T = std::tanh(xv);
        const double u = 1.0 + xv * xv;
        const double f = -xv / u;
        const double s = 1.0 + 0.5 / u;
        const double w = 1.0 - T * T;
        Lh[0] = T;
        Lhh[0] = T * T;
        if (set.max_len >= 1) {
            Lh[1] = w * (f - s * s * T);                               // L^0 h
            Lh[2] = s * w;                                             // L^1 h
            Lhh[1] = 2.0 * f * T * w + s * s * w * (1.0 - 3.0 * T * T); // L^0 <h,h>
            Lhh[2] = 2.0 * s * T * w;                                  // L^1 <h,h>
        }
        for (std::size_t k = 3; k < set.size(); ++k) {
            Lh[k] = bounded_eval(set.indices[k], false, xv);
            Lhh[k] = bounded_eval(set.indices[k], true, xv);
        }
    };
    m.operator_oracle = o;
    return m;
}

ModelSpec make_zero_sensor(InitialLaw law, int max_order) {
    ModelSpec m = bounded_dynamics(std::move(law));
    m.name = "zero_sensor";
    m.sensor = [](const Vec&) { return Vec{0.0}; };

    OperatorOracle o;
    o.max_order = max_order;
    o.d_V = 1;
    o.d_Y = 1;
    o.apply_to_sensor = [](const MultiIndex&, int, const Vec&) { return 0.0; };
    o.apply_to_hh = [](const MultiIndex&, const Vec&) { return 0.0; };
    o.batch = [](const IndexSet& set, const Vec&, double* Lh, double* Lhh) {
        for (std::size_t k = 0; k < set.size(); ++k) {
            Lh[k] = 0.0;
            Lhh[k] = 0.0;
        }
    };
    m.operator_oracle = o;
    return m;
}

// --------------------------------------------------------------------------
// generic finite-difference fallback

namespace {

double fd_step_exponent(std::size_t below, std::size_t total) {
    if (total <= 1) return 1.0 / 3.0;
    if (below == 0) return 1.0 / 6.0;
    if (below == 1) return 1.0 / 8.0;
    return 1.0 / 12.0;
}

double linf(const Vec& x) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::fabs(v));
    return m;
}

struct FdCtx {
    const ModelSpec* model;
    const MultiIndex* alpha;
    bool want_hh;
    int component;
};

double fd_target(const FdCtx& ctx, const Vec& x) {
    const Vec h = ctx.model->sensor(x);
    if (!ctx.want_hh) return h[std::size_t(ctx.component)];
    double s = 0.0;
    for (double v : h) s += v * v;
    return s;
}

double fd_apply(const FdCtx& ctx, std::size_t pos, const Vec& x) {
    const auto& entries = ctx.alpha->entries;
    if (pos == entries.size()) return fd_target(ctx, x);

    const std::size_t total = entries.size();
    const std::size_t below = total - pos - 1;
    const double step =
        std::pow(DBL_EPSILON, fd_step_exponent(below, total)) * (1.0 + linf(x));
    const int r = entries[pos];
    const int d = ctx.model->d_X;

    auto g = [&](const Vec& z) { return fd_apply(ctx, pos + 1, z); };

    if (r >= 1) {
        const Mat sig = ctx.model->diffusion(x);
        double s = 0.0;
        for (int k = 0; k < d; ++k) {
            Vec xp = x, xm = x;
            xp[std::size_t(k)] += step;
            xm[std::size_t(k)] -= step;
            s += sig(std::size_t(k), std::size_t(r - 1)) * (g(xp) - g(xm)) / (2.0 * step);
        }
        return s;
    }

    const Vec f = ctx.model->drift(x);
    const Mat sig = ctx.model->diffusion(x);
    const Mat a = matmul(sig, transpose(sig));
    const double g0 = g(x);
    double s = 0.0;
    for (int k = 0; k < d; ++k) {
        Vec xp = x, xm = x;
        xp[std::size_t(k)] += step;
        xm[std::size_t(k)] -= step;
        const double gp = g(xp), gm = g(xm);
        s += f[std::size_t(k)] * (gp - gm) / (2.0 * step);
        s += 0.5 * a(std::size_t(k), std::size_t(k)) * (gp - 2.0 * g0 + gm) / (step * step);
    }
    for (int k = 0; k < d; ++k)
        for (int l = k + 1; l < d; ++l) {
            Vec xpp = x, xpm = x, xmp = x, xmm = x;
            xpp[std::size_t(k)] += step; xpp[std::size_t(l)] += step;
            xpm[std::size_t(k)] += step; xpm[std::size_t(l)] -= step;
            xmp[std::size_t(k)] -= step; xmp[std::size_t(l)] += step;
            xmm[std::size_t(k)] -= step; xmm[std::size_t(l)] -= step;
            // a is symmetric: both (k,l) and (l,k) contribute
            s += a(std::size_t(k), std::size_t(l)) * (g(xpp) - g(xpm) - g(xmp) + g(xmm)) /
                 (4.0 * step * step);
        }
    return s;
}

} // namespace

OperatorOracle make_fd_oracle(const ModelSpec& model, int max_order) {
    OperatorOracle o;
    o.max_order = max_order;
    o.d_V = model.d_V;
    o.d_Y = model.d_Y;
    // capture the evaluators, not the whole spec, so the oracle stays valid
    // independently of the model object's lifetime
    ModelSpec shallow;
    shallow.d_X = model.d_X;
    shallow.d_V = model.d_V;
    shallow.d_Y = model.d_Y;
    shallow.drift = model.drift;
    shallow.diffusion = model.diffusion;
    shallow.sensor = model.sensor;
    auto held = std::make_shared<ModelSpec>(std::move(shallow));
    o.apply_to_sensor = [held](const MultiIndex& alpha, int i, const Vec& x) {
        FdCtx ctx{held.get(), &alpha, false, i};
        return fd_apply(ctx, 0, x);
    };
    o.apply_to_hh = [held](const MultiIndex& alpha, const Vec& x) {
        FdCtx ctx{held.get(), &alpha, true, 0};
        return fd_apply(ctx, 0, x);
    };
    return o;
}

} // namespace hofilter
