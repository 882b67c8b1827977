#include "sdemix/model.hpp"

#include <cmath>

#include "sdemix/error.hpp"
#include "sdemix/quadrature.hpp"

namespace sdemix {

ModelSpec ModelSpec::generic() const {
    ModelSpec m = *this;
    m.lamperti_closed = nullptr;
    m.lamperti_inv_closed = nullptr;
    m.H_closed = nullptr;
    m.phi_closed = nullptr;
    if (m.expfam) {
        m.expfam->int_f_sigma2 = nullptr;
        m.expfam->int_g_sigma2 = nullptr;
    }
    return m;
}

ModelId parse_model_id(const std::string& s) {
    if (s == "ou-speed" || s == "ou_speed") return ModelId::ou_speed;
    if (s == "t-diffusion" || s == "t_diffusion") return ModelId::t_diffusion;
    if (s == "ou-level" || s == "ou_level") return ModelId::ou_level;
    throw ConfigError("unknown model '" + s + "' (expected ou-speed, t-diffusion or ou-level)");
}

std::string to_string(ModelId id) {
    switch (id) {
        case ModelId::ou_speed: return "ou-speed";
        case ModelId::t_diffusion: return "t-diffusion";
        case ModelId::ou_level: return "ou-level";
    }
    return "?";
}

ModelSpec ou_speed_model() {
    ModelSpec m;
    m.name = "ou-speed";
    m.drift = [](const Vec&, const Vec& a, double x) { return -a[0] * x; };
    m.drift_dx = [](const Vec&, const Vec& a, double) { return -a[0]; };
    m.sigma = [](const Vec& beta, const Vec&, double) { return beta[0]; };
    m.sigma_dx = [](const Vec&, const Vec&, double) { return 0.0; };
    m.sigma_dxx = [](const Vec&, const Vec&, double) { return 0.0; };
    m.lamperti_closed = [](const Vec& beta, const Vec&, double x) { return x / beta[0]; };
    m.lamperti_inv_closed = [](const Vec& beta, const Vec&, double y) { return beta[0] * y; };
    m.H_closed = [](const Params& p, const Effects& e, double x, double y) {
        double b = p.beta[0];
        return -e.a[0] * (y * y - x * x) / (2.0 * b * b);
    };
    m.phi_closed = [](const Params&, const Effects& e, double y) {
        double a = e.a[0];
        return -a + a * a * y * y;
    };
    m.invariant_sampler = [](const Params& p, const Effects& e, Rng& rng) {
        double a = e.a[0];
        if (!(a > 0.0)) throw DomainError("ou-speed: stationary law needs a > 0");
        return p.beta[0] / std::sqrt(2.0 * a) * rng.normal();
    };
    m.mean_reversion = [](const Params&, const Effects& e) { return e.a[0]; };

    ExpFamBasis fb;
    fb.g = {[](double x) { return -x; }};
    fb.g_dx = {[](double) { return -1.0; }};
    fb.factor = ScaleFactor::beta;
    fb.c = [](const Vec&, double) { return 1.0; };
    fb.c_dx = [](const Vec&, double) { return 0.0; };
    fb.int_f_sigma2 = [](const Vec&, const Vec&, double, double) { return Vec(0); };
    fb.int_g_sigma2 = [](const Vec& beta, const Vec&, double x, double y) {
        Vec r(1);
        r[0] = -(y * y - x * x) / (2.0 * beta[0] * beta[0]);
        return r;
    };
    m.expfam = fb;
    return m;
}

ModelSpec t_diffusion_model() {
    ModelSpec m;
    m.name = "t-diffusion";
    m.drift = [](const Vec&, const Vec& a, double x) { return -a[0] * x; };
    m.drift_dx = [](const Vec&, const Vec& a, double) { return -a[0]; };
    m.sigma = [](const Vec& beta, const Vec&, double x) { return beta[0] * std::sqrt(1.0 + x * x); };
    m.sigma_dx = [](const Vec& beta, const Vec&, double x) {
        return beta[0] * x / std::sqrt(1.0 + x * x);
    };
    m.sigma_dxx = [](const Vec& beta, const Vec&, double x) {
        double s = 1.0 + x * x;
        return beta[0] / (s * std::sqrt(s));
    };
    m.lamperti_closed = [](const Vec& beta, const Vec&, double x) { return std::asinh(x) / beta[0]; };
    m.lamperti_inv_closed = [](const Vec& beta, const Vec&, double y) { return std::sinh(beta[0] * y); };
    m.H_closed = [](const Params& p, const Effects& e, double x, double y) {
        double b = p.beta[0];
        double r = std::log1p(y * y) - std::log1p(x * x);
        return -(e.a[0] / (2.0 * b * b) + 0.25) * r;
    };
    m.phi_closed = [](const Params& p, const Effects& e, double y) {
        double a = e.a[0], b = p.beta[0];
        double k = a / b + 0.5 * b;
        double th = std::tanh(b * y);
        double ch = std::cosh(b * y);
        return k * k * th * th - (a + 0.5 * b * b) / (ch * ch);
    };
    m.invariant_sampler = [](const Params& p, const Effects& e, Rng& rng) {
        double a = e.a[0], b = p.beta[0];
        if (!(a > 0.0)) throw DomainError("t-diffusion: stationary law needs a > 0");
        double nu = 2.0 * a / (b * b) + 1.0;
        std::student_t_distribution<double> t(nu);
        return t(rng.engine()) / std::sqrt(nu);
    };
    m.mean_reversion = [](const Params&, const Effects& e) { return e.a[0]; };

    ExpFamBasis fb;
    fb.g = {[](double x) { return -x; }};
    fb.g_dx = {[](double) { return -1.0; }};
    fb.factor = ScaleFactor::beta;
    fb.c = [](const Vec&, double x) { return std::sqrt(1.0 + x * x); };
    fb.c_dx = [](const Vec&, double x) { return x / std::sqrt(1.0 + x * x); };
    fb.int_f_sigma2 = [](const Vec&, const Vec&, double, double) { return Vec(0); };
    fb.int_g_sigma2 = [](const Vec& beta, const Vec&, double x, double y) {
        Vec r(1);
        r[0] = -(std::log1p(y * y) - std::log1p(x * x)) / (2.0 * beta[0] * beta[0]);
        return r;
    };
    m.expfam = fb;
    return m;
}

ModelSpec ou_level_model() {
    ModelSpec m;
    m.name = "ou-level";
    m.drift = [](const Vec& alpha, const Vec& a, double x) { return a[0] - alpha[0] * x; };
    m.drift_dx = [](const Vec& alpha, const Vec&, double) { return -alpha[0]; };
    m.sigma = [](const Vec& beta, const Vec&, double) { return beta[0]; };
    m.sigma_dx = [](const Vec&, const Vec&, double) { return 0.0; };
    m.sigma_dxx = [](const Vec&, const Vec&, double) { return 0.0; };
    m.lamperti_closed = [](const Vec& beta, const Vec&, double x) { return x / beta[0]; };
    m.lamperti_inv_closed = [](const Vec& beta, const Vec&, double y) { return beta[0] * y; };
    m.H_closed = [](const Params& p, const Effects& e, double x, double y) {
        double b = p.beta[0], al = p.alpha[0], a = e.a[0];
        return (a * (y - x) - 0.5 * al * (y * y - x * x)) / (b * b);
    };
    m.phi_closed = [](const Params& p, const Effects& e, double y) {
        double al = p.alpha[0], u = e.a[0] / p.beta[0] - al * y;
        return -al + u * u;
    };
    m.invariant_sampler = [](const Params& p, const Effects& e, Rng& rng) {
        double al = p.alpha[0];
        if (!(al > 0.0)) throw DomainError("ou-level: stationary law needs alpha > 0");
        return e.a[0] / al + p.beta[0] / std::sqrt(2.0 * al) * rng.normal();
    };
    m.mean_reversion = [](const Params& p, const Effects&) { return p.alpha[0]; };

    ExpFamBasis fb;
    fb.f = {[](double x) { return -x; }};
    fb.f_dx = {[](double) { return -1.0; }};
    fb.g = {[](double) { return 1.0; }};
    fb.g_dx = {[](double) { return 0.0; }};
    fb.factor = ScaleFactor::beta;
    fb.c = [](const Vec&, double) { return 1.0; };
    fb.c_dx = [](const Vec&, double) { return 0.0; };
    fb.int_f_sigma2 = [](const Vec& beta, const Vec&, double x, double y) {
        Vec r(1);
        r[0] = -(y * y - x * x) / (2.0 * beta[0] * beta[0]);
        return r;
    };
    fb.int_g_sigma2 = [](const Vec& beta, const Vec&, double x, double y) {
        Vec r(1);
        r[0] = (y - x) / (beta[0] * beta[0]);
        return r;
    };
    m.expfam = fb;
    return m;
}

ModelSpec builtin_model(ModelId id) {
    switch (id) {
        case ModelId::ou_speed: return ou_speed_model();
        case ModelId::t_diffusion: return t_diffusion_model();
        case ModelId::ou_level: return ou_level_model();
    }
    throw ConfigError("unknown model id");
}

double lamperti(const ModelSpec& m, const Vec& beta, const Vec& b, double x) {
    if (!m.in_state(x)) throw DomainError("lamperti: x outside the state interval");
    if (m.lamperti_closed) return m.lamperti_closed(beta, b, x);
    return adaptive_simpson([&](double u) { return 1.0 / m.sigma(beta, b, u); }, m.x_star, x);
}

double lamperti_inv(const ModelSpec& m, const Vec& beta, const Vec& b, double y) {
    if (m.lamperti_inv_closed) return m.lamperti_inv_closed(beta, b, y);
    auto h = [&](double x) { return lamperti(m, beta, b, x); };
    // bracket by doubling away from x_star, halving toward finite bounds
    double lo = m.x_star, hi = m.x_star;
    double step = m.sigma(beta, b, m.x_star) * std::max(1.0, std::fabs(y));
    int k = 0;
    if (y > 0) {
        while (true) {
            double cand = m.x_star + step;
            if (cand >= m.state_hi) cand = hi + 0.5 * (m.state_hi - hi);
            if (h(cand) >= y) {
                hi = cand;
                break;
            }
            lo = hi = cand;
            step *= 2.0;
            if (++k > 200) throw NumericError("lamperti_inv: no upper bracket for y=" + std::to_string(y));
        }
    } else if (y < 0) {
        while (true) {
            double cand = m.x_star - step;
            if (cand <= m.state_lo) cand = lo - 0.5 * (lo - m.state_lo);
            if (h(cand) <= y) {
                lo = cand;
                break;
            }
            lo = hi = cand;
            step *= 2.0;
            if (++k > 200) throw NumericError("lamperti_inv: no lower bracket for y=" + std::to_string(y));
        }
    } else {
        return m.x_star;
    }
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 200 && hi - lo > 1e-13 * (1.0 + std::fabs(x)); ++it) {
        x = 0.5 * (lo + hi);
        if (h(x) < y) lo = x;
        else hi = x;
    }
    x = 0.5 * (lo + hi);
    for (int it = 0; it < 3; ++it) {
        double nx = x - (h(x) - y) * m.sigma(beta, b, x);
        if (nx <= lo || nx >= hi) break;
        x = nx;
    }
    double r = std::fabs(h(x) - y);
    if (!(r < 1e-9)) {
        throw NumericError("lamperti_inv: residual " + std::to_string(r) + " at y=" + std::to_string(y) +
                           ", bracket [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return x;
}

double drift_mu(const ModelSpec& m, const Params& p, const Effects& e, double y) {
    double x = lamperti_inv(m, p.beta, e.b, y);
    return m.drift(p.alpha, e.a, x) / m.sigma(p.beta, e.b, x) - 0.5 * m.sigma_dx(p.beta, e.b, x);
}

double phi(const ModelSpec& m, const Params& p, const Effects& e, double y) {
    if (m.phi_closed) return m.phi_closed(p, e, y);
    double x = lamperti_inv(m, p.beta, e.b, y);
    double d = m.drift(p.alpha, e.a, x), dd = m.drift_dx(p.alpha, e.a, x);
    double s = m.sigma(p.beta, e.b, x), s1 = m.sigma_dx(p.beta, e.b, x), s2 = m.sigma_dxx(p.beta, e.b, x);
    return dd - 2.0 * d * s1 / s - 0.5 * s2 * s + 0.25 * s1 * s1 + d * d / (s * s);
}

double H_term(const ModelSpec& m, const Params& p, const Effects& e, double x, double y) {
    if (!m.in_state(x) || !m.in_state(y)) throw DomainError("H_term: point outside the state interval");
    if (x == y) return 0.0;
    if (m.H_closed) return m.H_closed(p, e, x, y);
    double integral = adaptive_simpson(
        [&](double u) {
            double s = m.sigma(p.beta, e.b, u);
            return m.drift(p.alpha, e.a, u) / (s * s);
        },
        x, y);
    return integral - 0.5 * std::log(m.sigma(p.beta, e.b, y) / m.sigma(p.beta, e.b, x));
}

double drift_from_basis(const ExpFamBasis& basis, const Vec& alpha, const Vec& a, double x) {
    double d = 0.0;
    for (std::size_t k = 0; k < basis.p1(); ++k) d += alpha[k] * basis.f[k](x);
    for (std::size_t k = 0; k < basis.p2(); ++k) d += a[k] * basis.g[k](x);
    return d;
}

double phi_from_basis(const ModelSpec& m, const Params& p, const Effects& e, double y) {
    if (!m.expfam) throw ConfigError("phi_from_basis: model has no exponential-family basis");
    const ExpFamBasis& fb = *m.expfam;
    double x = lamperti_inv(m, p.beta, e.b, y);
    double s = m.sigma(p.beta, e.b, x), s1 = m.sigma_dx(p.beta, e.b, x), s2 = m.sigma_dxx(p.beta, e.b, x);
    double dlog = s1 / s;
    double lin = 0.0, tilde = 0.0;
    for (std::size_t k = 0; k < fb.p1(); ++k) {
        double fk = fb.f[k](x);
        lin += p.alpha[k] * (fb.f_dx[k](x) - 2.0 * fk * dlog);
        tilde += p.alpha[k] * fk / s;
    }
    for (std::size_t k = 0; k < fb.p2(); ++k) {
        double gk = fb.g[k](x);
        lin += e.a[k] * (fb.g_dx[k](x) - 2.0 * gk * dlog);
        tilde += e.a[k] * gk / s;
    }
    return lin + tilde * tilde + 0.25 * s1 * s1 - 0.5 * s2 * s;
}

}  // namespace sdemix
