#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nlicl/corpus.hpp"

namespace nlicl::testing {

// Deterministic pseudo-words; every generated text is distinct.
std::vector<std::string> make_texts(std::size_t count, std::uint64_t seed, std::size_t words = 8);

// `count` examples with random texts in every input field and uniform random
// labels. Ids are id_prefix + zero-padded index.
Dataset synthetic_dataset(const TaskTemplate& task, std::size_t count, std::uint64_t seed,
                          const std::string& id_prefix);

std::string source_path(const std::string& relative);
std::string read_file(const std::string& path);

}  // namespace nlicl::testing
