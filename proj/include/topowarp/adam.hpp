#pragma once

#include "topowarp/tensor.hpp"

namespace topowarp {

// Adam optimizer over a fixed set of parameter tensors. Gradients are read
// from each tensor's .grad buffer; call zero_grad() after every step.
class Adam {
public:
    explicit Adam(std::vector<Tensor> params, double lr, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);

    // One bias-corrected update for every parameter.
    void step();
    void zero_grad();

    std::size_t step_count() const { return t_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
};

}  // namespace topowarp
