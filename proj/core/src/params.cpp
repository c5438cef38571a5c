#include "icflow/params.hpp"

namespace icflow {

void ParamStore::add(const std::string& name, Tensor t) {
    if (has(name)) throw DomainError("parameter already registered: " + name);
    index_[name] = names_.size();
    names_.push_back(name);
    tensors_.push_back(std::move(t));
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw DomainError("unknown parameter: " + name);
    return tensors_[it->second];
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw DomainError("unknown parameter: " + name);
    return tensors_[it->second];
}

std::size_t ParamStore::index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw DomainError("unknown parameter: " + name);
    return it->second;
}

Index ParamStore::total_scalars() const {
    Index n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
}

void ParamStore::quantize_f32() {
    for (auto& t : tensors_)
        for (Index i = 0; i < t.numel(); ++i)
            t.at(i) = static_cast<double>(static_cast<float>(t.at(i)));
}

BoundParams::BoundParams(Graph& g, const ParamStore& store) : store_(&store), graph_(&g) {
    handles_.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) handles_.push_back(g.param(store.tensor(i)));
}

Value BoundParams::operator[](const std::string& name) const {
    return handles_[store_->index_of(name)];
}

std::vector<Tensor> BoundParams::collect_grads(const Graph& g) const {
    std::vector<Tensor> grads;
    grads.reserve(handles_.size());
    for (Value h : handles_) grads.push_back(g.grad(h));
    return grads;
}

void SgdMomentum::step(ParamStore& params, const std::vector<Tensor>& grads) {
    if (grads.size() != params.size()) throw ShapeError("sgd: gradient count mismatch");
    if (velocity_.empty()) {
        velocity_.reserve(params.size());
        for (std::size_t i = 0; i < params.size(); ++i)
            velocity_.push_back(Tensor::zeros(params.tensor(i).shape()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params.tensor(i);
        Tensor& v = velocity_[i];
        const Tensor& gr = grads[i];
        if (!p.same_shape(gr)) throw ShapeError("sgd: gradient shape mismatch for " + params.name(i));
        for (Index j = 0; j < p.numel(); ++j) {
            v.at(j) = momentum_ * v.at(j) + gr.at(j);
            p.at(j) -= lr_ * v.at(j);
        }
    }
    params.quantize_f32();
}

}  // namespace icflow
