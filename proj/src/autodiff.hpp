#ifndef PXF_AUTODIFF_HPP
#define PXF_AUTODIFF_HPP

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace pxf {

// Reverse-mode tape. A graph is built per forward pass; backward() replays
// the recorded closures in reverse order. All reductions run left to right,
// so identical inputs give bit-identical values and gradients across runs
// and thread counts.
//
// param() nodes reference external tensors; the caller keeps them alive and
// unmodified for the life of the tape.
template <typename T>
class Tape {
public:
    struct Var {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    Var input(Tensor<T> value);
    Var param(const Tensor<T>* value);

    // -- primitives -------------------------------------------------------
    Var matmul(Var a, Var b);     // (m,k)x(k,n)
    Var matmul_nt(Var a, Var b);  // (m,k)x(n,k)^T
    Var add(Var a, Var b);
    Var add_rowvec(Var a, Var r);  // (n,d) + (1,d), broadcast over rows
    Var mul(Var a, Var b);
    Var scale(Var a, T s);
    Var affine_const(Var a, T s, Tensor<T> c);  // s*a + c
    Var gelu(Var a);
    Var layernorm(Var x, Var gamma, Var beta, T eps);
    Var masked_softmax(Var scores, Tensor<uint8_t> allow);  // empty allow = all
    Var embedding(Var table, std::vector<int> ids);
    Var replace_rows(Var x, std::vector<int> rows, Var row);
    Var slice_rows(Var a, int r0, int r1);
    Var slice_cols(Var a, int c0, int c1);
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(const std::vector<Var>& parts);
    // out[i] = in[perm[i]]; perm must be a bijection on the element count
    Var permute_elements(Var a, std::vector<int64_t> perm, std::vector<int> out_shape);
    Var sum(Var a);
    Var mean(Var a);
    Var mse(Var a, Var b);  // mean((a-b)^2)
    Var mse_const(Var a, Tensor<T> b);
    Var cross_entropy(Var logits, std::vector<int> targets);

    // -- execution --------------------------------------------------------
    const Tensor<T>& value(Var v) const;
    void backward(Var scalar_loss);
    const Tensor<T>& grad(Var v) const;  // valid after backward()
    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor<T> owned;
        const Tensor<T>* external = nullptr;
        Tensor<T> grad;
        bool requires_grad = false;
        std::function<void(Tape&)> back;
    };

    const Tensor<T>& val(int id) const {
        const Node& n = nodes_[static_cast<size_t>(id)];
        return n.external ? *n.external : n.owned;
    }
    Tensor<T>& gbuf(int id) { return nodes_[static_cast<size_t>(id)].grad; }
    bool wants(int id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
    void accum(int id, const Tensor<T>& g);
    Var push(Tensor<T> value, bool requires_grad, std::function<void(Tape&)> back);
    void check(Var v, const char* op) const;

    std::vector<Node> nodes_;
    bool ran_backward_ = false;
    int top_ = -1;  // node whose backward closure is currently running
};

// Named parameter set; names are unique, order is the iteration order used
// everywhere (gradients, optimizer state, checkpoints).
template <typename T>
struct NamedTensors {
    std::vector<std::string> names;
    std::vector<Tensor<T>> values;

    void add(std::string name, Tensor<T> value);
    int index_of(const std::string& name) const;  // -1 when absent
    size_t size() const { return names.size(); }
};

// A scalar-valued computation over a fixed set of parameter tensors. Must be
// pure: evaluating it twice with the same parameter values gives the same
// result (finite_diff relies on this to evaluate per-coordinate in parallel).
template <typename T>
using ScalarFn = std::function<typename Tape<T>::Var(Tape<T>&, const std::vector<typename Tape<T>::Var>&)>;

template <typename T>
std::pair<T, NamedTensors<T>> forward_backward(const ScalarFn<T>& f, const NamedTensors<T>& params);

// Central differences (f(x+eps) - f(x-eps)) / (2 eps), one coordinate at a
// time. f64 only.
NamedTensors<double> finite_diff(const ScalarFn<double>& f, const NamedTensors<double>& params, double eps);

struct GradReport {
    double max_rel_err = 0.0;
    double eps = 0.0;
    double tol = 0.0;
    bool pass = false;
    std::string worst_param;
    int64_t worst_index = -1;
};

// Reverse-mode gradients versus central differences. Relative error per
// coordinate is |ad - fd| / max(|ad|, |fd|, 1e-6).
GradReport check_gradients(const ScalarFn<double>& f, const NamedTensors<double>& params, double eps, double tol);

extern template class Tape<float>;
extern template class Tape<double>;
extern template struct NamedTensors<float>;
extern template struct NamedTensors<double>;
extern template std::pair<float, NamedTensors<float>> forward_backward(const ScalarFn<float>&,
                                                                       const NamedTensors<float>&);
extern template std::pair<double, NamedTensors<double>> forward_backward(const ScalarFn<double>&,
                                                                         const NamedTensors<double>&);

}  // namespace pxf

#endif
