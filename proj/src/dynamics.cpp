#include "orbitvae/dynamics.hpp"

#include <cmath>
#include <string>

#include "orbitvae/errors.hpp"

namespace orbitvae {

MassRatio::MassRatio(double mu) : mu_(mu) {
    if (!(mu > 0.0 && mu <= 0.5)) {
        throw InvalidArgument("mass ratio must lie in (0, 0.5], got " + std::to_string(mu));
    }
}

PrimaryDistances primary_distances(const MassRatio& mu, const Vec3& pos) {
    const double dx1 = pos.x() - mu.primary1_x();
    const double dx2 = pos.x() - mu.primary2_x();
    const double yz2 = pos.y() * pos.y() + pos.z() * pos.z();
    const PrimaryDistances d{std::sqrt(dx1 * dx1 + yz2), std::sqrt(dx2 * dx2 + yz2)};
    if (!(d.r1 >= kSingularityRadius) || !(d.r2 >= kSingularityRadius)) {
        throw SingularityError("state within singularity radius of a primary (r1=" +
                               std::to_string(d.r1) + ", r2=" + std::to_string(d.r2) + ")");
    }
    return d;
}

double potential(const MassRatio& mu, const Vec3& pos) {
    const auto [r1, r2] = primary_distances(mu, pos);
    const double m = mu.value();
    return 0.5 * (pos.x() * pos.x() + pos.y() * pos.y()) + (1.0 - m) / r1 + m / r2;
}

Vec3 potential_gradient(const MassRatio& mu, const Vec3& pos) {
    const auto [r1, r2] = primary_distances(mu, pos);
    const double m = mu.value();
    const double k1 = (1.0 - m) / (r1 * r1 * r1);
    const double k2 = m / (r2 * r2 * r2);
    const double dx1 = pos.x() - mu.primary1_x();
    const double dx2 = pos.x() - mu.primary2_x();
    return {pos.x() - k1 * dx1 - k2 * dx2,
            pos.y() - (k1 + k2) * pos.y(),
            -(k1 + k2) * pos.z()};
}

Mat3 potential_hessian(const MassRatio& mu, const Vec3& pos) {
    const auto [r1, r2] = primary_distances(mu, pos);
    const double m = mu.value();
    const Vec3 d1(pos.x() - mu.primary1_x(), pos.y(), pos.z());
    const Vec3 d2(pos.x() - mu.primary2_x(), pos.y(), pos.z());
    const double r1_3 = r1 * r1 * r1;
    const double r2_3 = r2 * r2 * r2;
    const double a1 = (1.0 - m) / r1_3;
    const double a2 = m / r2_3;
    const double b1 = 3.0 * (1.0 - m) / (r1_3 * r1 * r1);
    const double b2 = 3.0 * m / (r2_3 * r2 * r2);

    // Point-mass tidal terms: -a I + b d d^T per primary, plus the centrifugal part.
    Mat3 h = -(a1 + a2) * Mat3::Identity() + b1 * d1 * d1.transpose() + b2 * d2 * d2.transpose();
    h(0, 0) += 1.0;
    h(1, 1) += 1.0;
    return h;
}

Vec6 eom(const MassRatio& mu, const StateVector& state) {
    const Vec3 grad = potential_gradient(mu, state.head<3>());
    Vec6 d;
    d << state[3], state[4], state[5],
         2.0 * state[4] + grad.x(),
         -2.0 * state[3] + grad.y(),
         grad.z();
    return d;
}

double jacobi_constant(const MassRatio& mu, const StateVector& state) {
    return 2.0 * potential(mu, state.head<3>()) - state.tail<3>().squaredNorm();
}

Mat6 eom_jacobian(const MassRatio& mu, const StateVector& state) {
    Mat6 a = Mat6::Zero();
    a.topRightCorner<3, 3>().setIdentity();
    a.bottomLeftCorner<3, 3>() = potential_hessian(mu, state.head<3>());
    a(3, 4) = 2.0;
    a(4, 3) = -2.0;
    return a;
}

bool is_finite(const StateVector& state) { return state.allFinite(); }

}  // namespace orbitvae
