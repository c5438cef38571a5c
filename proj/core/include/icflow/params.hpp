#ifndef ICFLOW_PARAMS_HPP
#define ICFLOW_PARAMS_HPP

#include <string>
#include <unordered_map>
#include <vector>

#include "icflow/graph.hpp"
#include "icflow/tensor.hpp"

namespace icflow {

// Named trainable tensors in registration order. Values are kept on the f32
// grid (quantize_f32 after init and after every optimizer step) so that the
// f32 checkpoint payload round-trips bit-exactly.
class ParamStore {
public:
    void add(const std::string& name, Tensor t);
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    std::size_t index_of(const std::string& name) const;

    std::size_t size() const { return names_.size(); }
    const std::string& name(std::size_t i) const { return names_[i]; }
    Tensor& tensor(std::size_t i) { return tensors_[i]; }
    const Tensor& tensor(std::size_t i) const { return tensors_[i]; }

    Index total_scalars() const;
    void quantize_f32();

private:
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Every parameter bound as a differentiable leaf of one graph, in store order.
class BoundParams {
public:
    BoundParams(Graph& g, const ParamStore& store);

    Value operator[](const std::string& name) const;
    Value by_index(std::size_t i) const { return handles_[i]; }

    // gradients in store order; exact zeros for untouched parameters
    std::vector<Tensor> collect_grads(const Graph& g) const;

private:
    const ParamStore* store_;
    Graph* graph_;
    std::vector<Value> handles_;
};

// Plain SGD with momentum: v = m*v + g; p -= lr*v. Parameters are snapped
// back to the f32 grid after each step.
class SgdMomentum {
public:
    SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {}
    void step(ParamStore& params, const std::vector<Tensor>& grads);

private:
    double lr_;
    double momentum_;
    std::vector<Tensor> velocity_;
};

}  // namespace icflow

#endif
