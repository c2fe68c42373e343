// SPDX-License-Identifier: Apache-2.0
//
// Tab-separated sample files: one sample per line, source and target
// separated by a single tab, tokens by single spaces, newline-terminated.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "semlink/common.hpp"

namespace semlink {

void write_samples(std::ostream& out, const std::vector<Sample>& samples);
std::vector<Sample> read_samples(std::istream& in);

void save_samples(const std::filesystem::path& path,
                  const std::vector<Sample>& samples);
std::vector<Sample> load_samples(const std::filesystem::path& path);

std::string serialize_samples(const std::vector<Sample>& samples);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace semlink
