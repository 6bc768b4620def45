#include <Eigen/Core>

#include "semadv/autodiff.hpp"

namespace semadv::nn::kernels {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const MatRM>;
using MapM = Eigen::Map<MatRM>;

void gemm(const float* a, const float* b, float* c, int m, int k, int n, bool acc) {
    MapC A(a, m, k), B(b, k, n);
    MapM C(c, m, n);
    if (acc)
        C.noalias() += A * B;
    else
        C.noalias() = A * B;
}

void gemm_tn(const float* a, const float* b, float* c, int m, int k, int n, bool acc) {
    MapC A(a, k, m), B(b, k, n);
    MapM C(c, m, n);
    if (acc)
        C.noalias() += A.transpose() * B;
    else
        C.noalias() = A.transpose() * B;
}

void gemm_nt(const float* a, const float* b, float* c, int m, int n, int k, bool acc) {
    MapC A(a, m, n), B(b, k, n);
    MapM C(c, m, k);
    if (acc)
        C.noalias() += A * B.transpose();
    else
        C.noalias() = A * B.transpose();
}

}  // namespace semadv::nn::kernels
