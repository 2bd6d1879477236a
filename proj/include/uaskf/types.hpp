#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace uaskf {

using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Matrix = Eigen::MatrixXd;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Index of a discrete mode inside a HybridSystem.
struct ModeId {
    std::size_t index = 0;

    friend bool operator==(ModeId, ModeId) = default;
};

enum class ErrorKind {
    InvalidArgument,
    NumericalDivergence,
    GrazingContact,
    ZenoSuspicion,
    TransversalityViolation,
    InvalidCovariance,
    SingularInnovation,
    ContractViolation,
    MultimodalCloud,
    SingularCovariance,
    UndefinedTest,
    Io,
    Config,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid argument";
        case ErrorKind::NumericalDivergence: return "numerical divergence";
        case ErrorKind::GrazingContact: return "grazing contact";
        case ErrorKind::ZenoSuspicion: return "zeno suspicion";
        case ErrorKind::TransversalityViolation: return "transversality violation";
        case ErrorKind::InvalidCovariance: return "invalid covariance";
        case ErrorKind::SingularInnovation: return "singular innovation";
        case ErrorKind::ContractViolation: return "contract violation";
        case ErrorKind::MultimodalCloud: return "multimodal cloud";
        case ErrorKind::SingularCovariance: return "singular covariance";
        case ErrorKind::UndefinedTest: return "undefined test";
        case ErrorKind::Io: return "io";
        case ErrorKind::Config: return "config";
    }
    return "unknown";
}

/// Symmetric part (S + S^T) / 2.
template <typename Derived>
MatrixX<typename Derived::Scalar> symmetrized(const Eigen::MatrixBase<Derived>& s) {
    MatrixX<typename Derived::Scalar> out = s;
    out = (0.5 * (out + out.transpose())).eval();
    return out;
}

/// Smallest eigenvalue of the symmetric part of a square matrix; +inf for 0x0.
double min_eigenvalue(const Matrix& s);

}  // namespace uaskf
