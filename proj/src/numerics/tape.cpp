#include "ldesign/numerics/tape.hpp"

#include <cmath>

namespace ldesign::numerics {

void Tape::backward(int loss, double seed) {
  adj_[loss] += seed;
  for (int i = loss; i >= 0; --i) {
    double g = adj_[i];
    if (g == 0.0) continue;
    const Node& n = nodes_[i];
    switch (n.op) {
      case Op::Leaf:
      case Op::Const:
        break;
      case Op::Add:
        adj_[n.a] += g;
        adj_[n.b] += g;
        break;
      case Op::Sub:
        adj_[n.a] += g;
        adj_[n.b] -= g;
        break;
      case Op::Mul:
        adj_[n.a] += g * val_[n.b];
        adj_[n.b] += g * val_[n.a];
        break;
      case Op::Div: {
        double inv = 1.0 / val_[n.b];
        adj_[n.a] += g * inv;
        adj_[n.b] -= g * val_[i] * inv;
        break;
      }
      case Op::Neg:
        adj_[n.a] -= g;
        break;
      case Op::AddC:
        adj_[n.a] += g;
        break;
      case Op::SubCR:
        adj_[n.a] -= g;
        break;
      case Op::MulC:
        adj_[n.a] += g * n.aux;
        break;
      case Op::Exp:
        adj_[n.a] += g * val_[i];
        break;
      case Op::Log:
        adj_[n.a] += g / val_[n.a];
        break;
      case Op::Tanh:
        adj_[n.a] += g * (1.0 - val_[i] * val_[i]);
        break;
      case Op::Relu:
        if (val_[n.a] > 0.0) adj_[n.a] += g;
        break;
      case Op::Sigmoid:
        adj_[n.a] += g * val_[i] * (1.0 - val_[i]);
        break;
      case Op::Sin:
        adj_[n.a] += g * std::cos(val_[n.a]);
        break;
      case Op::Cos:
        adj_[n.a] -= g * std::sin(val_[n.a]);
        break;
      case Op::Sqrt:
        adj_[n.a] += g * 0.5 / val_[i];
        break;
      case Op::PowC:
        adj_[n.a] += g * n.aux * std::pow(val_[n.a], n.aux - 1.0);
        break;
      case Op::Min:
        adj_[val_[n.a] <= val_[n.b] ? n.a : n.b] += g;
        break;
      case Op::Max:
        adj_[val_[n.a] >= val_[n.b] ? n.a : n.b] += g;
        break;
      case Op::Select:
        adj_[val_[n.a] >= 0.0 ? n.b : n.c] += g;
        break;
      case Op::Affine: {
        adj_[n.c] += g;
        const int* a = args_.data() + n.a;
        for (int k = 0; k < n.b; ++k) {
          int w = a[2 * k], x = a[2 * k + 1];
          adj_[w] += g * val_[x];
          adj_[x] += g * val_[w];
        }
        break;
      }
      case Op::External: {
        const int* a = args_.data() + n.a;
        const double* p = ext_partials_.data() + n.c;
        for (int k = 0; k < n.b; ++k) adj_[a[k]] += g * p[k];
        break;
      }
    }
  }
}

int Tape::first_nonfinite_value(int begin) const {
  for (int i = begin; i < size(); ++i)
    if (!std::isfinite(val_[i])) return i;
  return -1;
}

int Tape::first_nonfinite_adjoint(int begin) const {
  for (int i = begin; i < size(); ++i)
    if (!std::isfinite(adj_[i])) return i;
  return -1;
}

}  // namespace ldesign::numerics
