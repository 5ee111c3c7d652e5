#pragma once

#include <string>
#include <string_view>

namespace infodemic {

/// Snowball English (Porter2) stemmer, following the reference algorithm
/// definition including its exception lists. Input is a lowercase ASCII word.
std::string snowball_english_stem(std::string_view word);

}  // namespace infodemic
