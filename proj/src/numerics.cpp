#include "tgate/numerics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#include "tgate/error.hpp"

namespace tgate {

GaussHermite gauss_hermite(int order) {
    if (order < 1) {
        throw Error(ErrorKind::InvalidArgument, "quadrature order must be >= 1");
    }
    // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
    for (int k = 1; k < order; ++k) {
        jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
    GaussHermite q;
    q.nodes.resize(order);
    q.weights.resize(order);
    for (int i = 0; i < order; ++i) {
        q.nodes[i] = eig.eigenvalues()[i];
        double v0 = eig.eigenvectors()(0, i);
        q.weights[i] = v0 * v0;
    }
    return q;
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t index, std::uint64_t salt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      static_cast<std::uint32_t>(salt)};
    return std::mt19937_64(seq);
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)> &fn) {
    std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::size_t err_index = n;
    std::exception_ptr err;
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    std::size_t i = next.fetch_add(1);
                    if (i >= n) return;
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(err_mutex);
                        if (i < err_index) {
                            err_index = i;
                            err = std::current_exception();
                        }
                    }
                }
            });
        }
    }
    if (err) std::rethrow_exception(err);
}

double interp_linear(const std::vector<double> &x, const std::vector<double> &y, double xq) {
    if (x.empty() || x.size() != y.size()) {
        throw Error(ErrorKind::InvalidArgument, "interpolation grid and values differ in length");
    }
    if (xq <= x.front()) return y.front();
    if (xq >= x.back()) return y.back();
    auto it = std::upper_bound(x.begin(), x.end(), xq);
    std::size_t k = static_cast<std::size_t>(it - x.begin()) - 1;
    double w = (xq - x[k]) / (x[k + 1] - x[k]);
    return y[k] + w * (y[k + 1] - y[k]);
}

std::uint64_t fnv1a64(const std::string &data) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace tgate
