#include "scp/nn/sgd.hpp"

namespace scp::nn {

template <class T>
Sgd<T>::Sgd(std::vector<Param<T>*> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
    velocity_.reserve(params_.size());
    for (auto* p : params_) velocity_.emplace_back(p->value.size(), T{});
}

template <class T>
void Sgd<T>::step(double lr) {
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& p = *params_[k];
        auto& v = velocity_[k];
        const std::size_t n = p.value.size();
#pragma omp parallel for schedule(static)
        for (std::size_t i = 0; i < n; ++i) {
            const double g = static_cast<double>(p.grad[i]) + weight_decay_ * p.value[i];
            const double vel = momentum_ * v[i] + g;
            v[i] = static_cast<T>(vel);
            p.value[i] = static_cast<T>(p.value[i] - lr * vel);
        }
    }
}

template class Sgd<float>;
template class Sgd<double>;

}  // namespace scp::nn
