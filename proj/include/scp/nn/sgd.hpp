#pragma once

#include <vector>

#include "scp/nn/layers.hpp"

namespace scp::nn {

// SGD with heavy-ball momentum and L2 weight decay folded into the gradient.
template <class T>
class Sgd {
public:
    Sgd(std::vector<Param<T>*> params, double momentum, double weight_decay);

    void step(double lr);

    std::vector<std::vector<T>>& momentum_buffers() { return velocity_; }
    const std::vector<std::vector<T>>& momentum_buffers() const { return velocity_; }
    const std::vector<Param<T>*>& params() const { return params_; }

private:
    std::vector<Param<T>*> params_;
    std::vector<std::vector<T>> velocity_;
    double momentum_;
    double weight_decay_;
};

}  // namespace scp::nn
