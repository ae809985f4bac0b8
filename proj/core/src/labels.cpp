#include "torclass/labels.hpp"

#include <algorithm>
#include <cctype>
#include <string>

namespace torclass {

std::string_view label_name(ClassLabel label) {
  switch (label) {
    case ClassLabel::NonTor: return "NonTor";
    case ClassLabel::Tor: return "Tor";
    case ClassLabel::Unlabeled: return "Unlabeled";
  }
  return "Unlabeled";
}

std::optional<ClassLabel> parse_label(std::string_view text) {
  std::string s;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (s == "tor") return ClassLabel::Tor;
  if (s == "nontor" || s == "non-tor") return ClassLabel::NonTor;
  if (s == "unlabeled" || s.empty()) return ClassLabel::Unlabeled;
  return std::nullopt;
}

}  // namespace torclass
