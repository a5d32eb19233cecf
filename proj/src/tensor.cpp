#include "topowarp/tensor.hpp"

#include <sstream>

namespace topowarp {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << ")";
    return os.str();
}

std::vector<double>& TensorImpl::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad)
    : impl_(std::make_shared<TensorImpl>()) {
    impl_->shape = std::move(shape);
    impl_->data.assign(shape_numel(impl_->shape), fill);
    impl_->requires_grad = requires_grad;
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size())
        throw ShapeError("from_data: shape " + shape_str(shape) + " wants " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(data);
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
Tensor Tensor::full(Shape shape, double value) { return Tensor(std::move(shape), value); }
Tensor Tensor::scalar(double value) { return Tensor(Shape{}, value); }

const Shape& Tensor::shape() const {
    if (!impl_) throw ValueError("use of undefined tensor");
    return impl_->shape;
}

std::size_t Tensor::numel() const { return impl_ ? impl_->data.size() : 0; }

std::size_t Tensor::extent(std::size_t axis) const {
    const Shape& s = shape();
    if (axis >= s.size())
        throw ShapeError("extent: axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(s.size()));
    return s[axis];
}

double* Tensor::data() { return vec().data(); }
const double* Tensor::data() const { return vec().data(); }

std::vector<double>& Tensor::vec() {
    if (!impl_) throw ValueError("use of undefined tensor");
    return impl_->data;
}

const std::vector<double>& Tensor::vec() const {
    if (!impl_) throw ValueError("use of undefined tensor");
    return impl_->data;
}

double& Tensor::at(std::size_t r, std::size_t c) {
    if (rank() != 2) throw ShapeError("at(r,c) on rank-" + std::to_string(rank()) + " tensor");
    return vec()[r * extent(1) + c];
}
double Tensor::at(std::size_t r, std::size_t c) const {
    return const_cast<Tensor*>(this)->at(r, c);
}
double& Tensor::at(std::size_t ch, std::size_t r, std::size_t c) {
    if (rank() != 3) throw ShapeError("at(ch,r,c) on rank-" + std::to_string(rank()) + " tensor");
    return vec()[(ch * extent(1) + r) * extent(2) + c];
}
double Tensor::at(std::size_t ch, std::size_t r, std::size_t c) const {
    return const_cast<Tensor*>(this)->at(ch, r, c);
}

double Tensor::item() const {
    if (numel() != 1)
        throw ShapeError("item() on tensor with " + std::to_string(numel()) + " elements");
    return vec()[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool v) {
    if (!impl_) throw ValueError("use of undefined tensor");
    impl_->requires_grad = v;
    return *this;
}

bool Tensor::on_tape() const { return impl_ && impl_->on_tape; }

void Tensor::mark_on_tape() {
    if (!impl_) throw ValueError("use of undefined tensor");
    impl_->on_tape = true;
}

std::vector<double>& Tensor::grad() {
    if (!impl_) throw ValueError("use of undefined tensor");
    return impl_->ensure_grad();
}

const std::vector<double>* Tensor::grad_if() const {
    if (!impl_ || impl_->grad.size() != impl_->data.size()) return nullptr;
    return &impl_->grad;
}

void Tensor::zero_grad() {
    if (impl_ && !impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
    if (!impl_) return Tensor();
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl>();
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    t.impl_->requires_grad = impl_->requires_grad;
    return t;
}

Tensor Tensor::detached() const {
    if (!impl_) return Tensor();
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl>();
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;  // copy of values; no tape linkage either way
    return t;
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> backward_fn) {
    entries_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1) throw ShapeError("backward: loss must be scalar");
    if (!loss.on_tape() && !loss.requires_grad())
        throw ValueError("backward: loss does not participate in this tape");
    const_cast<Tensor&>(loss).grad()[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = prev_; }

double Rng::uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(eng_);
}

double Rng::normal(double mean, double sd) {
    std::normal_distribution<double> d(mean, sd);
    return d(eng_);
}

bool Rng::bernoulli(double p) {
    std::bernoulli_distribution d(p);
    return d(eng_);
}

std::uint64_t Rng::next_index(std::uint64_t n) {
    std::uniform_int_distribution<std::uint64_t> d(0, n - 1);
    return d(eng_);
}

// splitmix64-style mix so derived streams are decorrelated from each other
// and from the parent seed.
std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(seed) ^ a) ^ b);
}

}  // namespace topowarp
