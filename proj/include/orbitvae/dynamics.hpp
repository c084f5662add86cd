#pragma once

#include <Eigen/Dense>

namespace orbitvae {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Rotating-frame state (x, y, z, vx, vy, vz), dimensionless.
using StateVector = Vec6;

/// Earth-Moon mass ratio.
inline constexpr double kEarthMoonMu = 0.01215;

/// Radius around each primary inside which the vector field is not evaluated.
inline constexpr double kSingularityRadius = 1e-12;

/// Mass ratio m2 / (m1 + m2) of the CR3BP. Constructing one outside (0, 0.5]
/// throws InvalidArgument.
class MassRatio {
public:
    explicit MassRatio(double mu);

    double value() const noexcept { return mu_; }

    /// Larger primary at (-mu, 0, 0).
    double primary1_x() const noexcept { return -mu_; }
    /// Smaller primary at (1 - mu, 0, 0).
    double primary2_x() const noexcept { return 1.0 - mu_; }

    friend bool operator==(const MassRatio&, const MassRatio&) = default;

private:
    double mu_;
};

/// Distances from a point to both primaries.
struct PrimaryDistances {
    double r1;
    double r2;
};

/// Throws SingularityError when the point is within kSingularityRadius of a primary.
PrimaryDistances primary_distances(const MassRatio& mu, const Vec3& pos);

/// U(x,y,z) = (x^2 + y^2)/2 + (1-mu)/r1 + mu/r2.
double potential(const MassRatio& mu, const Vec3& pos);

/// Analytic gradient (Ux, Uy, Uz).
Vec3 potential_gradient(const MassRatio& mu, const Vec3& pos);

/// Analytic Hessian of U (symmetric).
Mat3 potential_hessian(const MassRatio& mu, const Vec3& pos);

/// Time derivative (vx, vy, vz, 2vy + Ux, -2vx + Uy, Uz).
Vec6 eom(const MassRatio& mu, const StateVector& state);

/// C = 2U - |v|^2.
double jacobi_constant(const MassRatio& mu, const StateVector& state);

/// Jacobian of eom with respect to the state.
Mat6 eom_jacobian(const MassRatio& mu, const StateVector& state);

/// True when all six components are finite.
bool is_finite(const StateVector& state);

}  // namespace orbitvae
