#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace pulleytens::oracle {

using Vec3 = Eigen::Vector3d;
using VectorXd = Eigen::VectorXd;
using MatrixXd = Eigen::MatrixXd;

class OracleError : public std::runtime_error {
public:
    explicit OracleError(const std::string& what) : std::runtime_error(what) {}
};

/// One cross-check between an analytic quantity and its brute-force value.
struct OracleReport {
    std::string quantity;
    double analytic = 0.0;
    double reference = 0.0;
    double absolute_error = 0.0;
    double relative_error = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

inline OracleReport make_report(const std::string& quantity, double analytic, double reference,
                                double tolerance) {
    OracleReport r;
    r.quantity = quantity;
    r.analytic = analytic;
    r.reference = reference;
    r.absolute_error = std::abs(analytic - reference);
    const double denom = std::max(std::abs(analytic), std::abs(reference));
    r.relative_error = denom > 0.0 ? r.absolute_error / denom : r.absolute_error;
    r.tolerance = tolerance;
    r.pass = r.relative_error <= tolerance;
    return r;
}

/// Central-difference gradient. When the function throws at a probe point the
/// step is halved, up to eight times, before giving up.
inline VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f, const VectorXd& x,
                            double step) {
    VectorXd grad(x.size());
    for (int i = 0; i < x.size(); ++i) {
        double h = step;
        for (int attempt = 0;; ++attempt) {
            VectorXd xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            try {
                grad[i] = (f(xp) - f(xm)) / (2.0 * h);
                break;
            } catch (const std::exception&) {
                if (attempt >= 8)
                    throw OracleError("fd_gradient: function not evaluable near coordinate " +
                                      std::to_string(i));
                h *= 0.5;
            }
        }
    }
    return grad;
}

/// Central-difference Jacobian of a vector function.
inline MatrixXd fd_jacobian(const std::function<VectorXd(const VectorXd&)>& f, const VectorXd& x,
                            double step) {
    MatrixXd jac;
    for (int i = 0; i < x.size(); ++i) {
        double h = step;
        for (int attempt = 0;; ++attempt) {
            VectorXd xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            try {
                const VectorXd column = (f(xp) - f(xm)) / (2.0 * h);
                if (jac.size() == 0) jac.resize(column.size(), x.size());
                jac.col(i) = column;
                break;
            } catch (const std::exception&) {
                if (attempt >= 8)
                    throw OracleError("fd_jacobian: function not evaluable near coordinate " +
                                      std::to_string(i));
                h *= 0.5;
            }
        }
    }
    return jac;
}

/// Second-order central-difference Hessian of a scalar function.
inline MatrixXd fd_hessian(const std::function<double(const VectorXd&)>& f, const VectorXd& x,
                           double step) {
    const int n = static_cast<int>(x.size());
    MatrixXd hess(n, n);
    auto probe = [&](int i, int j, double si, double sj) {
        VectorXd p = x;
        p[i] += si * step;
        p[j] += sj * step;
        return f(p);
    };
    const double f0 = f(x);
    for (int i = 0; i < n; ++i) {
        hess(i, i) = (probe(i, i, 1, 0) - 2.0 * f0 + probe(i, i, -1, 0)) / (step * step);
        for (int j = 0; j < i; ++j) {
            const double v = (probe(i, j, 1, 1) - probe(i, j, 1, -1) - probe(i, j, -1, 1) +
                              probe(i, j, -1, -1)) /
                             (4.0 * step * step);
            hess(i, j) = v;
            hess(j, i) = v;
        }
    }
    return hess;
}

/// Common tangent line of two in-plane circles, found by a one-dimensional
/// sign-change scan plus bisection on the tangency condition -- no closed-form
/// triangle identities, so it stays independent of the analytic geometry path.
///
/// side = +1 means the string passes the wheel on the right of its travel
/// direction (wheel center on the left), side = -1 the mirror image, side = 0
/// only for radius-0 ends.
struct TangencyResult {
    Vec3 start_point;
    Vec3 end_point;
    double straight_length = 0.0;
    Vec3 direction;
};

namespace detail {

inline Vec3 in_plane_dir(double angle) { return Vec3{std::cos(angle), std::sin(angle), 0.0}; }

inline Vec3 left_normal(const Vec3& d) { return Vec3{-d.y(), d.x(), 0.0}; }

}  // namespace detail

inline TangencyResult brute_tangency(const Vec3& center1, double r1, int side1, const Vec3& center2,
                                     double r2, int side2) {
    if ((r1 == 0.0) != (side1 == 0) || (r2 == 0.0) != (side2 == 0))
        throw OracleError("brute_tangency: side flag must be zero exactly for radius-0 ends");

    TangencyResult out;
    if (r1 == 0.0 && r2 == 0.0) {
        out.start_point = center1;
        out.end_point = center2;
        out.straight_length = (center2 - center1).norm();
        if (out.straight_length == 0.0) throw OracleError("brute_tangency: coincident points");
        out.direction = (center2 - center1) / out.straight_length;
        return out;
    }

    // Residual of the tangency condition for a candidate parameter. For a
    // positive start radius the parameter is the tangent-point angle on circle
    // 1; otherwise it is the direction angle of the line through center1.
    auto line_of = [&](double param) {
        Vec3 p1, d;
        if (r1 > 0.0) {
            const Vec3 u = detail::in_plane_dir(param);
            p1 = center1 + r1 * u;
            d = static_cast<double>(side1) * detail::left_normal(u);
        } else {
            p1 = center1;
            d = detail::in_plane_dir(param);
        }
        return std::make_pair(p1, d);
    };
    auto residual = [&](double param) {
        const auto [p1, d] = line_of(param);
        return detail::left_normal(d).dot(center2 - p1) - static_cast<double>(side2) * r2;
    };
    auto endpoint = [&](const Vec3& d) {
        return r2 > 0.0 ? Vec3(center2 - static_cast<double>(side2) * r2 * detail::left_normal(d))
                        : center2;
    };

    const int grid = 16384;
    const double two_pi = 2.0 * std::numbers::pi;
    std::optional<TangencyResult> best;
    double prev = residual(0.0);
    for (int i = 1; i <= grid; ++i) {
        const double a = two_pi * i / grid;
        const double cur = residual(a);
        if (prev == 0.0 || prev * cur < 0.0) {
            double lo = two_pi * (i - 1) / grid, hi = a;
            double flo = prev;
            while (hi - lo > 1e-13) {
                const double mid = 0.5 * (lo + hi);
                const double fm = residual(mid);
                if (flo * fm <= 0.0) {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            const double root = 0.5 * (lo + hi);
            const auto [p1, d] = line_of(root);
            const Vec3 p2 = endpoint(d);
            if ((p2 - p1).dot(d) > 0.0) {
                TangencyResult cand;
                cand.start_point = p1;
                cand.end_point = p2;
                cand.straight_length = (p2 - p1).norm();
                cand.direction = d;
                if (!best || std::abs(residual(root)) < 1e-9) best = cand;
            }
        }
        prev = cur;
    }
    if (!best)
        throw OracleError("brute_tangency: no tangent line of the requested class exists");
    return *best;
}

/// Arc swept at a wheel between the entry and exit tangent points, measured in
/// the winding sense given by the side flag; in [0, 2pi).
inline double wrap_angle_at(const Vec3& center, double radius, int side, const Vec3& entry_point,
                            const Vec3& exit_point) {
    if (radius <= 0.0) throw OracleError("wrap_angle_at: needs a positive radius");
    const Vec3 u = entry_point - center;
    const Vec3 v = exit_point - center;
    const double cross = u.x() * v.y() - u.y() * v.x();
    const double dot = u.x() * v.x() + u.y() * v.y();
    // side = +1: center left of travel, string winds counterclockwise.
    double a = std::atan2(side > 0 ? cross : -cross, dot);
    if (a < 0.0) a += 2.0 * std::numbers::pi;
    return a;
}

/// Result of the derivative-free energy minimization.
struct MinimizeResult {
    VectorXd point;
    double value = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Minimizes a scalar function using Newton steps built purely from finite
/// differences of function values, with adaptive diagonal damping and
/// backtracking. Deliberately slow and simple; used on small decks only.
inline MinimizeResult minimize_scalar(const std::function<double(const VectorXd&)>& f,
                                      const VectorXd& x0, double gradient_tol, int max_iter = 200) {
    MinimizeResult res;
    VectorXd x = x0;
    const double scale = std::max(1.0, x0.size() ? x0.cwiseAbs().maxCoeff() : 1.0);
    const double grad_step = 1e-6 * scale;
    const double hess_step = 1e-4 * scale;
    double damping = 0.0;

    double fx = f(x);
    for (res.iterations = 0; res.iterations < max_iter; ++res.iterations) {
        VectorXd grad = fd_gradient(f, x, grad_step);
        res.gradient_norm = grad.norm();
        if (res.gradient_norm <= gradient_tol) {
            res.converged = true;
            break;
        }
        MatrixXd hess = fd_hessian(f, x, hess_step);
        hess = 0.5 * (hess + hess.transpose());

        VectorXd step;
        for (int tries = 0;; ++tries) {
            MatrixXd damped = hess;
            if (damping > 0.0) damped += damping * MatrixXd::Identity(hess.rows(), hess.cols());
            Eigen::LDLT<MatrixXd> ldlt(damped);
            if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
                step = -ldlt.solve(grad);
                break;
            }
            damping = damping == 0.0 ? 1e-8 * std::abs(hess.trace() / hess.rows()) + 1e-16
                                     : damping * 10.0;
            if (tries > 60) throw OracleError("minimize_scalar: cannot regularize the Hessian");
        }

        double lambda = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            try {
                const double trial = f(x + lambda * step);
                if (trial < fx) {
                    x += lambda * step;
                    fx = trial;
                    accepted = true;
                    break;
                }
            } catch (const std::exception&) {
                // invalid geometry at the trial point; shrink
            }
            lambda *= 0.5;
        }
        if (accepted) {
            damping *= 0.25;
        } else {
            damping = damping == 0.0 ? 1e-8 * std::abs(hess.trace() / hess.rows()) + 1e-16
                                     : damping * 100.0;
            if (damping > 1e30) break;
        }
    }
    res.point = x;
    res.value = fx;
    return res;
}

}  // namespace pulleytens::oracle
