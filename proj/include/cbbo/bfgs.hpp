#ifndef CBBO_BFGS_HPP
#define CBBO_BFGS_HPP

#include <cmath>
#include <limits>

#include <cbbo/common.hpp>

namespace cbbo {

struct BfgsOptions {
    int max_iterations = 80;
    double gradient_tolerance = 1e-5;
    double function_tolerance = 1e-9;
    int max_backtracks = 30;
};

struct BfgsResult {
    Vector x;
    double value = std::numeric_limits<double>::infinity();
    int iterations = 0;
    int evaluations = 0;
};

/// Quasi-Newton minimization with Armijo backtracking.
/// `objective(x, grad)` returns f(x) and writes the gradient; a non-finite
/// return marks x as infeasible and shortens the step.
template <typename Objective>
BfgsResult minimize_bfgs(Objective&& objective, Vector x, const BfgsOptions& options = {})
{
    const Eigen::Index n = x.size();
    BfgsResult result;
    Vector grad(n), grad_new(n);
    double value = objective(x, grad);
    ++result.evaluations;
    if (!std::isfinite(value)) {
        result.x = x;
        return result;
    }

    Matrix inv_hessian = Matrix::Identity(n, n);
    bool fresh = true;
    for (int iter = 0; iter < options.max_iterations; ++iter) {
        result.iterations = iter + 1;
        if (grad.lpNorm<Eigen::Infinity>() < options.gradient_tolerance)
            break;
        Vector direction = -inv_hessian * grad;
        double slope = grad.dot(direction);
        if (slope >= 0) {
            inv_hessian.setIdentity();
            direction = -grad;
            slope = -grad.squaredNorm();
            fresh = true;
        }
        double step = fresh ? std::min(1.0, 1.0 / std::max(1e-12, direction.lpNorm<Eigen::Infinity>())) : 1.0;
        Vector candidate(n);
        double candidate_value = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int bt = 0; bt < options.max_backtracks; ++bt) {
            candidate = x + step * direction;
            candidate_value = objective(candidate, grad_new);
            ++result.evaluations;
            if (std::isfinite(candidate_value) && candidate_value <= value + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            if (fresh)
                break;
            inv_hessian.setIdentity();
            fresh = true;
            continue;
        }

        const Vector s = candidate - x;
        const Vector y = grad_new - grad;
        const double improvement = value - candidate_value;
        x = candidate;
        grad = grad_new;
        value = candidate_value;

        const double sy = s.dot(y);
        if (sy > 1e-12) {
            if (fresh)
                inv_hessian *= sy / y.squaredNorm();
            const double rho = 1.0 / sy;
            const Matrix left = Matrix::Identity(n, n) - rho * s * y.transpose();
            inv_hessian = left * inv_hessian * left.transpose() + rho * s * s.transpose();
            fresh = false;
        }
        if (improvement < options.function_tolerance * (1.0 + std::abs(value)))
            break;
    }
    result.x = x;
    result.value = value;
    return result;
}

} // namespace cbbo

#endif
