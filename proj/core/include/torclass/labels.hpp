#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace torclass {

/// Class ids double as output indices of the classifiers: NonTor = 0, Tor = 1.
enum class ClassLabel : int { NonTor = 0, Tor = 1, Unlabeled = 2 };

inline constexpr int kNumClasses = 2;

std::string_view label_name(ClassLabel label);

/// Case-insensitive: "tor", "nontor", "unlabeled" (also "non-tor", "").
std::optional<ClassLabel> parse_label(std::string_view text);

inline int class_id(ClassLabel label) { return static_cast<int>(label); }

}  // namespace torclass
