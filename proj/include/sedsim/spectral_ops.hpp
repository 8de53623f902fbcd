#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "sedsim/field.hpp"
#include "sedsim/torus.hpp"

namespace sedsim {

// Zero-mode is annihilated; all other modes divided by the full |k|^2
// (Nyquist included), the quadratic-form inverse of dirichlet_energy.
void apply_inverse_laplacian(FourierField& f);

// Mode-wise projection onto divergence-free fields using the odd wavenumber
// kt (Nyquist zeroed); modes with kt = 0 are untouched.
void apply_leray(FourierField& f);

// d-component gradient of a scalar coefficient field, via i*kt.
FourierField gradient(const FourierField& scalar);

// Scalar divergence of a d-component coefficient field, via i*kt.
FourierField divergence(const FourierField& vec);

// integral over the box of sum_c |grad f_c|^2, with the full |k|^2 weight.
double dirichlet_energy(const FourierField& f);

// Same integral but for the synthesized spectral gradient (kt weight): by
// Parseval this equals the plain grid quadrature h^d sum |grad f(x_j)|^2.
double gradient_square_integral(const FourierField& f);

// Forward-difference gradient symbols (exp(2*pi*i*m/n) - 1)/h tabulated per
// signed mode number. The particle solvers run on this discrete (mimetic)
// operator family -- gradient D+, divergence -D+^*, Laplacian = the standard
// 2d+1-point stencil with symbol |g|^2 -- because the collocated rigidity
// constraints are well-conditioned against local stencils, while the exact
// spectral symbols leave an exponentially flat tail of near-null multiplier
// directions that no iterative or direct solver can resolve in doubles.
struct FdSymbols {
    int n;
    std::vector<std::complex<double>> sym;

    explicit FdSymbols(const TorusDomain& dom);

    std::complex<double> operator()(int m_signed) const {
        int i = m_signed % n;
        if (i < 0) i += n;
        return sym[i];
    }
};

// Divides every nonzero mode by the discrete Laplacian symbol |g|^2; the zero
// mode is annihilated.
void apply_inverse_laplacian_fd(FourierField& f);

// Mode-wise projection orthogonal to the gradient symbol g: annihilates
// discrete gradients exactly, leaves discretely divergence-free fields fixed.
void apply_leray_fd(FourierField& f);

// d-component discrete gradient D+ of a scalar coefficient field.
FourierField gradient_fd(const FourierField& scalar);

// Scalar discrete divergence (negative adjoint of D+) of a d-component field.
FourierField divergence_fd(const FourierField& vec);

// integral over the box of sum_c |D+ f_c|^2 = h^d sum_cells |D+ f|^2, the
// quadratic form inverted by apply_inverse_laplacian_fd.
double gradient_square_integral_fd(const FourierField& f);

// Mean-zero G with -Lap G = delta_src - L^{-d}, the delta being a unit mass
// concentrated on the grid cell containing `source`.
SpectralField laplace_green(const TorusDomain& dom, const Point& source);

struct StokesletSolution {
    SpectralField velocity;  // d components
    SpectralField pressure;  // 1 component
};

// Mean-zero periodic Stokes response to the cell-center indicator of the
// unit ball at the origin, forcing (1_B - |B|/L^d) e.
StokesletSolution averaged_stokeslet(const TorusDomain& dom, const Eigen::VectorXd& e);

// Flat indices of cells whose centers lie in the closed ball of radius
// `radius` about `center` (periodic metric).
std::vector<std::int64_t> ball_cells(const TorusDomain& dom, const Point& center, double radius = 1.0);

// Per-component mean of `f` over ball_cells(center); throws if the ball
// captures fewer than 8 cells.
Eigen::VectorXd ball_average(const SpectralField& f, const Point& center, double radius = 1.0);

// Periodic d-linear interpolation of all components at an arbitrary point.
Eigen::VectorXd interpolate(const SpectralField& f, const Point& x);

}  // namespace sedsim
