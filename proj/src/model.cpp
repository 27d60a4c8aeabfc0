#include "mplexnet/model.hpp"

#include <algorithm>

#include "mplexnet/diffcore/ops.hpp"
#include "mplexnet/error.hpp"

namespace mplexnet {

const mplexgraph::MultiplexGraph& Dataset::graph(std::size_t row) const {
  if (graphs.empty()) throw ArtifactError("dataset has no graphs");
  return graphs.size() == 1 ? graphs[0] : graphs.at(row);
}

void Dataset::validate(std::size_t num_classes) const {
  if (labels.size() != features.rows)
    throw DimensionError("dataset has " + std::to_string(features.rows) + " feature rows but " +
                         std::to_string(labels.size()) + " labels");
  if (!ids.empty() && ids.size() != features.rows) throw DimensionError("dataset id count differs from row count");
  if (graphs.size() > 1 && graphs.size() != features.rows)
    throw DimensionError("dataset needs one graph per row or a single shared graph");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
      throw ConfigError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) + " is outside [0, " +
                        std::to_string(num_classes) + ")");
}

Matrix predict_proba(const Classifier& model, const Dataset& data, std::span<const std::size_t> rows,
                     std::size_t batch_size) {
  diffcore::NoGradGuard guard;
  const auto c = model.num_classes();
  Matrix out(rows.size(), c);
  for (std::size_t start = 0; start < rows.size(); start += batch_size) {
    const auto n = std::min(batch_size, rows.size() - start);
    auto probs = diffcore::softmax_rows(model.logits(data, rows.subspan(start, n)));
    std::copy(probs.begin(), probs.end(), out.data.begin() + static_cast<long>(start * c));
  }
  return out;
}

}  // namespace mplexnet
