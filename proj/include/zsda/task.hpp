#pragma once

#include <cstddef>
#include <string>

namespace zsda {

enum class TaskKind { classification, regression };

// Classification targets are class indices 0..classes-1 stored as doubles; the text
// format shifts them to 1..C on disk. Regression targets are real values.
struct TaskSpec {
  TaskKind kind = TaskKind::classification;
  std::size_t classes = 2;  // 1 for regression

  static TaskSpec classification(std::size_t c) { return {TaskKind::classification, c}; }
  static TaskSpec regression() { return {TaskKind::regression, 1}; }

  bool is_classification() const noexcept { return kind == TaskKind::classification; }
  // Number of head outputs: C for classification, 1 for regression.
  std::size_t outputs() const noexcept { return is_classification() ? classes : 1; }

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

inline std::string to_string(TaskKind k) {
  return k == TaskKind::classification ? "classification" : "regression";
}

}  // namespace zsda
