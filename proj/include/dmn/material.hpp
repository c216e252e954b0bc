#pragma once

#include <utility>
#include <vector>

#include "dmn/mandel.hpp"

namespace dmn::material {

// Isotropic hardening: either the exponential-saturation law
//   s_y(ep) = s1 + s2*ep - s3*exp(-h0*ep)
// or a piecewise-linear (ep, s_y) table with final-segment extrapolation.
struct HardeningCurve {
    enum class Kind { exponential, table };
    Kind kind = Kind::exponential;
    double h0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::vector<std::pair<double, double>> points; // sorted by ep

    double yield_stress(double ep) const;
    double slope(double ep) const;
    void validate() const; // throws on non-positive initial yield or bad table
};

struct ConstitutiveSpec {
    enum class Law { elastic, j2 };
    Law law = Law::elastic;
    double young = 0.0;
    double poisson = 0.0;
    double density = 0.0; // tonne/mm^3
    HardeningCurve hardening;

    Mat6 stiffness() const { return isotropic_stiffness(young, poisson); }
    void validate() const;
};

struct PointState {
    Vec6 stress = Vec6::Zero();
    Vec6 plastic_strain = Vec6::Zero();
    double eps_plastic = 0.0;
};

struct UpdateResult {
    Vec6 dstress;    // committed stress increment for this strain increment
    Mat6 tangent;    // consistent algorithmic tangent
    Vec6 correction; // dstress - tangent * dstrain, zero for elastic steps
    PointState state;
};

// One quadrature-scale material point. update() is pure with respect to the
// committed state; commit() advances it once the enclosing step converges.
class MaterialPoint {
public:
    MaterialPoint() = default;
    explicit MaterialPoint(const ConstitutiveSpec* spec);

    UpdateResult update(const Vec6& dstrain) const;
    void commit(const PointState& s) { state_ = s; }
    const PointState& state() const { return state_; }
    void set_state(const PointState& s) { state_ = s; }
    const ConstitutiveSpec& spec() const { return *spec_; }

private:
    const ConstitutiveSpec* spec_ = nullptr;
    PointState state_;
    double mu_ = 0.0, kappa_ = 0.0;
};

double yield_stress(double eps_plastic, const HardeningCurve& curve);

} // namespace dmn::material
