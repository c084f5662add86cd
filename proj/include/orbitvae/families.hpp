#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "orbitvae/dynamics.hpp"
#include "orbitvae/integrator.hpp"

namespace orbitvae {

enum class Libration { L1, L2, L3, L4, L5 };

std::string to_string(Libration label);
/// Parses "L1".."L5" (case-insensitive); throws InvalidArgument otherwise.
Libration parse_libration(const std::string& text);

struct LagrangePoint {
    Libration label;
    Vec3 position;
};

struct PeriodicOrbit {
    StateVector initial_state;
    double period = 0.0;
    double jacobi = 0.0;
    double stability_index = 0.0;
    std::string family;
};

struct Catalog {
    MassRatio mu{kEarthMoonMu};
    std::vector<PeriodicOrbit> orbits;
};

/// L1..L5 in label order. Collinear points by bisection on dU/dx along the x-axis.
std::array<LagrangePoint, 5> lagrange_points(const MassRatio& mu);

struct CorrectorOptions {
    int max_iterations = 50;
    /// Convergence threshold on |vx| at the half-period crossing.
    double vx_tol = 1e-11;
    /// Extra Newton updates after convergence, kept only while |vx| decreases.
    int polish_iterations = 3;
};

/// Symmetric single-shooting corrector for planar Lyapunov orbits. Holds x0 fixed and
/// adjusts vy0 until the first y = 0 crossing is perpendicular (|vx| < vx_tol). Throws
/// NumericError when the iteration limit is exhausted. `iterations` counts the updates
/// needed to reach vx_tol; polishing updates are not counted.
PeriodicOrbit differential_correct(const MassRatio& mu, double guess_x0, double guess_vy0,
                                   const IntegratorConfig& config = {},
                                   const CorrectorOptions& options = {});

/// Same as above; also reports how many Newton updates were applied.
PeriodicOrbit differential_correct(const MassRatio& mu, double guess_x0, double guess_vy0,
                                   const IntegratorConfig& config, const CorrectorOptions& options,
                                   int& iterations);

/// Linearized planar center-manifold guess at a collinear point, offset by dx along x.
/// Returns (x0, vy0).
std::pair<double, double> linear_lyapunov_guess(const MassRatio& mu, Libration point, double dx);

struct ContinuationResult {
    Catalog catalog;
    bool complete = true;
    /// Empty when complete; otherwise names the failing member and reason.
    std::string diagnostic;
};

inline constexpr double kDefaultFamilyStep = 1.5e-3;

/// Natural-parameter continuation in x0 for the planar Lyapunov family of L1 or L2.
/// The first member starts 1e-3 from the libration point on the side facing away from the
/// Moon (Earth side for L1, far side for L2), and each next member steps another dx_step
/// outward. Member 1 is seeded by the linear guess, later members by a secant extrapolation
/// of vy0 over the previous two. Period and Jacobi constant must be strictly
/// monotone along the family, otherwise the run stops with a diagnostic.
ContinuationResult continue_family(const MassRatio& mu, Libration point, int count,
                                   double dx_step = kDefaultFamilyStep,
                                   const IntegratorConfig& config = {},
                                   const CorrectorOptions& options = {});

/// max |lambda + 1/lambda| / 2 over the monodromy eigenvalues.
double stability_index(const Mat6& monodromy);

/// Monodromy matrix over one period, then stability_index of it.
double stability_index(const MassRatio& mu, const PeriodicOrbit& orbit,
                       const IntegratorConfig& config = {});

/// Euclidean norm of Phi(T, X0) - X0.
double periodicity_residual(const MassRatio& mu, const PeriodicOrbit& orbit,
                            const IntegratorConfig& config = {});

/// Catalog CSV: "# mu=<value>" comment, header
/// family,x0,y0,z0,vx0,vy0,vz0,period,jacobi,stability and one row per orbit.
std::string format_catalog(const Catalog& catalog);
Catalog parse_catalog(const std::string& text);
void write_catalog(const Catalog& catalog, const std::filesystem::path& path);
Catalog read_catalog(const std::filesystem::path& path);

}  // namespace orbitvae
