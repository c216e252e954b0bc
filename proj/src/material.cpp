#include "dmn/material.hpp"

#include <algorithm>
#include <cmath>

namespace dmn::material {

namespace {

const Vec6 kTraceVec = (Vec6() << 1.0, 1.0, 1.0, 0.0, 0.0, 0.0).finished();

Vec6 deviatoric(const Vec6& v) {
    double p = (v[0] + v[1] + v[2]) / 3.0;
    Vec6 d = v;
    d[0] -= p;
    d[1] -= p;
    d[2] -= p;
    return d;
}

Mat6 elastic_matrix(double kappa, double mu) {
    Mat6 p_vol = (kTraceVec * kTraceVec.transpose()) / 3.0;
    return 3.0 * kappa * p_vol + 2.0 * mu * (Mat6::Identity() - p_vol);
}

} // namespace

double HardeningCurve::yield_stress(double ep) const {
    if (kind == Kind::exponential) {
        return s1 + s2 * ep - s3 * std::exp(-h0 * ep);
    }
    if (points.empty()) throw NumericError("hardening table is empty");
    if (points.size() == 1) return points.front().second; // perfect plasticity
    if (ep <= points.front().first) return points.front().second;
    for (std::size_t i = 1; i < points.size(); ++i) {
        if (ep <= points[i].first) {
            double t = (ep - points[i - 1].first) / (points[i].first - points[i - 1].first);
            return points[i - 1].second + t * (points[i].second - points[i - 1].second);
        }
    }
    // extrapolate along the final segment
    auto& a = points[points.size() - 2];
    auto& b = points.back();
    double m = (b.second - a.second) / (b.first - a.first);
    return b.second + m * (ep - b.first);
}

double HardeningCurve::slope(double ep) const {
    if (kind == Kind::exponential) {
        return s2 + s3 * h0 * std::exp(-h0 * ep);
    }
    if (points.size() < 2) return 0.0;
    if (ep <= points.front().first) {
        return (points[1].second - points[0].second) / (points[1].first - points[0].first);
    }
    for (std::size_t i = 1; i < points.size(); ++i) {
        if (ep <= points[i].first) {
            return (points[i].second - points[i - 1].second) / (points[i].first - points[i - 1].first);
        }
    }
    auto& a = points[points.size() - 2];
    auto& b = points.back();
    return (b.second - a.second) / (b.first - a.first);
}

void HardeningCurve::validate() const {
    if (kind == Kind::table) {
        if (points.empty()) throw UserError("hardening table needs at least one point");
        for (std::size_t i = 1; i < points.size(); ++i) {
            if (points[i].first <= points[i - 1].first) {
                throw UserError("hardening table abscissae must increase");
            }
        }
    }
    if (!(yield_stress(0.0) > 0.0)) {
        throw UserError("hardening law: initial yield stress must be positive");
    }
}

void ConstitutiveSpec::validate() const {
    if (!(young > 0.0) || !(poisson > -1.0) || !(poisson < 0.5)) {
        throw UserError("material: elastic constants out of range");
    }
    if (law == Law::j2) hardening.validate();
}

double yield_stress(double eps_plastic, const HardeningCurve& curve) {
    if (eps_plastic < 0.0) throw NumericError("yield_stress: negative plastic strain");
    double s = curve.yield_stress(eps_plastic);
    if (!(s > 0.0)) throw NumericError("yield_stress: non-positive yield");
    return s;
}

MaterialPoint::MaterialPoint(const ConstitutiveSpec* spec) : spec_(spec) {
    mu_ = spec->young / (2.0 * (1.0 + spec->poisson));
    kappa_ = spec->young / (3.0 * (1.0 - 2.0 * spec->poisson));
}

UpdateResult MaterialPoint::update(const Vec6& dstrain) const {
    UpdateResult out;
    Mat6 c_el = elastic_matrix(kappa_, mu_);
    Vec6 trial = state_.stress + c_el * dstrain;

    if (spec_->law == ConstitutiveSpec::Law::elastic) {
        out.dstress = trial - state_.stress;
        out.tangent = c_el;
        out.correction = Vec6::Zero();
        out.state = state_;
        out.state.stress = trial;
        return out;
    }

    const double sq23 = std::sqrt(2.0 / 3.0);
    Vec6 s_trial = deviatoric(trial);
    double q = s_trial.norm(); // Mandel norm equals the tensor Frobenius norm
    double sy0 = yield_stress(state_.eps_plastic, spec_->hardening);
    double f_trial = q - sq23 * sy0;

    if (f_trial <= 1e-12 * std::max(1.0, sy0)) {
        out.dstress = trial - state_.stress;
        out.tangent = c_el;
        out.correction = Vec6::Zero();
        out.state = state_;
        out.state.stress = trial;
        return out;
    }

    // Radial return: q - 2*mu*dl = sqrt(2/3) * s_y(ep + sqrt(2/3)*dl)
    auto g = [&](double dl) {
        return q - 2.0 * mu_ * dl - sq23 * spec_->hardening.yield_stress(state_.eps_plastic + sq23 * dl);
    };
    double lo = 0.0, hi = q / (2.0 * mu_);
    double dl = f_trial / (2.0 * mu_ + (2.0 / 3.0) * spec_->hardening.slope(state_.eps_plastic));
    dl = std::clamp(dl, lo, hi);
    bool converged = false;
    for (int it = 0; it < 50; ++it) {
        double gv = g(dl);
        if (std::abs(gv) <= 1e-12 * std::max(1.0, q)) {
            converged = true;
            break;
        }
        if (gv > 0.0) lo = dl; else hi = dl;
        double dg = -2.0 * mu_ - (2.0 / 3.0) * spec_->hardening.slope(state_.eps_plastic + sq23 * dl);
        double next = dl - gv / dg;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi); // bisection fallback
        dl = next;
    }
    if (!converged) {
        throw NumericError("material: radial return did not converge in 50 iterations");
    }

    Vec6 n_dir = s_trial / q;
    double ep_new = state_.eps_plastic + sq23 * dl;

    out.state = state_;
    out.state.stress = trial - 2.0 * mu_ * dl * n_dir;
    out.state.plastic_strain = state_.plastic_strain + dl * n_dir;
    out.state.eps_plastic = ep_new;

    double hprime = spec_->hardening.slope(ep_new);
    double theta = 1.0 - 2.0 * mu_ * dl / q;
    double theta_bar = 1.0 / (1.0 + hprime / (3.0 * mu_)) - (1.0 - theta);
    Mat6 p_vol = (kTraceVec * kTraceVec.transpose()) / 3.0;
    out.tangent = 3.0 * kappa_ * p_vol + 2.0 * mu_ * theta * (Mat6::Identity() - p_vol) -
                  2.0 * mu_ * theta_bar * (n_dir * n_dir.transpose());
    out.dstress = out.state.stress - state_.stress;
    out.correction = out.dstress - out.tangent * dstrain;
    return out;
}

} // namespace dmn::material
