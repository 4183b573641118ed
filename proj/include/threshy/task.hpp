#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "threshy/error.hpp"

namespace threshy {

enum class TaskKind { binary, multiclass, multilabel };

inline std::string_view to_string(TaskKind task) {
  switch (task) {
    case TaskKind::binary: return "binary";
    case TaskKind::multiclass: return "multiclass";
    case TaskKind::multilabel: return "multilabel";
  }
  return "unknown";
}

inline std::optional<TaskKind> try_parse_task(std::string_view text) {
  if (text == "binary") return TaskKind::binary;
  if (text == "multiclass") return TaskKind::multiclass;
  if (text == "multilabel") return TaskKind::multilabel;
  return std::nullopt;
}

inline TaskKind parse_task(std::string_view text) {
  if (auto task = try_parse_task(text)) return *task;
  throw Error(ErrorCode::validation, "unknown task kind '" + std::string(text) +
                                         "' (expected binary, multiclass or multilabel)");
}

}  // namespace threshy
