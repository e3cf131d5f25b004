#pragma once

#include <vector>

#include "cellgan/segmentation.hpp"
#include "cellgan/tensor.hpp"

namespace cellgan::data {

// Training view of a set of cell instances: CHW float rows in [-1, 1].
struct TrainSet {
  int64_t count = 0;
  int channels = 3, hw = 32;
  std::vector<float> rows;        // count x (3*32*32)
  std::vector<int> class_labels;  // -1 when unknown

  int64_t row_size() const { return (int64_t)channels * hw * hw; }
};

TrainSet to_train_set(const std::vector<seg::CellInstance>& instances);

// Single instance -> [1,3,32,32] tensor in [-1,1].
template <typename S>
ad::TensorT<S> instance_to_tensor(const seg::CellInstance& instance);

template <typename S>
ad::TensorT<S> make_batch(const TrainSet& set, const std::vector<uint32_t>& indices);

}  // namespace cellgan::data
