#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace teamsmp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VecIn = Eigen::Ref<const Eigen::VectorXd>;
using MatIn = Eigen::Ref<const Eigen::MatrixXd>;
using VecOut = Eigen::Ref<Eigen::VectorXd>;
using MatOut = Eigen::Ref<Eigen::MatrixXd>;

// Malformed problem, strategy or configuration data.
class ModelError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A non-finite value showed up during simulation or evaluation.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, std::size_t path, std::size_t step)
        : std::runtime_error(what), path_(path), step_(step) {}

    std::size_t path() const { return path_; }
    std::size_t step() const { return step_; }

private:
    std::size_t path_;
    std::size_t step_;
};

class RegressionError : public std::runtime_error {
public:
    RegressionError(const std::string& what, std::size_t step)
        : std::runtime_error(what), step_(step) {}

    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

inline bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& a) {
    return a.allFinite();
}

}  // namespace teamsmp
