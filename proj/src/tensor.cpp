#include "lmnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lmnet {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

template <typename T>
bool BasicTensor<T>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    fail(ErrorKind::ShapeMismatch, "cannot compare " + shape_string(a.shape()) + " with " + shape_string(b.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return worst;
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template double max_abs_diff(const BasicTensor<float>&, const BasicTensor<float>&);
template double max_abs_diff(const BasicTensor<double>&, const BasicTensor<double>&);

}  // namespace lmnet
