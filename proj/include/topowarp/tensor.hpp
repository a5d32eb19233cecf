#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace topowarp {

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ValueError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    bool on_tape = false;  // set when produced by a recorded op
    std::vector<double> grad;

    std::vector<double>& ensure_grad();
};

// Dense row-major 64-bit real tensor. Value-semantics handle: copies share
// storage, clone() deep-copies. Gradients accumulate into `grad` when a Tape
// is active and the tensor participates in the recorded computation.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);

    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;
    std::size_t extent(std::size_t axis) const;

    double* data();
    const double* data() const;
    std::vector<double>& vec();
    const std::vector<double>& vec() const;

    // Flat and 2/3-d element access (row-major).
    double& operator[](std::size_t i) { return vec()[i]; }
    double operator[](std::size_t i) const { return vec()[i]; }
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;
    double& at(std::size_t ch, std::size_t r, std::size_t c);
    double at(std::size_t ch, std::size_t r, std::size_t c) const;

    double item() const;  // scalar tensors only

    bool requires_grad() const;
    Tensor& set_requires_grad(bool v);
    bool on_tape() const;
    void mark_on_tape();
    // True when backward may need a gradient for this tensor.
    bool grad_path() const { return defined() && (requires_grad() || on_tape()); }

    std::vector<double>& grad();            // allocates zero-filled on first use
    const std::vector<double>* grad_if() const;  // nullptr when never touched
    void zero_grad();

    Tensor clone() const;     // deep copy, detached from any tape
    Tensor detached() const;  // shares data, no grad participation

    TensorImpl* impl() const { return impl_.get(); }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Reverse-mode tape: records one backward closure per executed operation and
// replays them in exact reverse execution order.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(std::function<void()> backward_fn);
    std::size_t size() const { return entries_.size(); }
    void clear() { entries_.clear(); }

    // Seeds d(loss)/d(loss) = 1 and replays the tape backwards, accumulating
    // into .grad of every participating tensor. Loss must be scalar.
    void backward(const Tensor& loss);

    static Tape* active();

private:
    friend class TapeScope;
    std::vector<std::function<void()>> entries_;
};

// RAII activation of a tape for the current thread.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

// Seeded deterministic RNG. Streams for independent units of work (samples,
// epochs) are derived by hashing, so results do not depend on evaluation
// order.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform(double lo, double hi);
    double normal(double mean, double sd);
    bool bernoulli(double p);
    std::uint64_t next_index(std::uint64_t n);  // uniform in [0, n)
    std::mt19937_64& engine() { return eng_; }

    static std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

private:
    std::mt19937_64 eng_;
};

}  // namespace topowarp
