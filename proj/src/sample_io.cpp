// SPDX-License-Identifier: Apache-2.0

#include "semlink/sample_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace semlink {

void write_samples(std::ostream& out, const std::vector<Sample>& samples) {
  for (const auto& s : samples) {
    out << join(s.source) << '\t' << join(s.target) << '\n';
  }
}

std::vector<Sample> read_samples(std::istream& in) {
  std::vector<Sample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw Error(ErrorKind::Format,
                  "line " + std::to_string(lineno) + ": expected exactly one tab");
    }
    Sample s{tokenize(std::string_view(line).substr(0, tab)),
             tokenize(std::string_view(line).substr(tab + 1))};
    if (s.source.empty() || s.target.empty()) {
      throw Error(ErrorKind::Format,
                  "line " + std::to_string(lineno) + ": empty source or target");
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string serialize_samples(const std::vector<Sample>& samples) {
  std::ostringstream os;
  write_samples(os, samples);
  return os.str();
}

void save_samples(const std::filesystem::path& path,
                  const std::vector<Sample>& samples) {
  write_file(path, serialize_samples(samples));
}

std::vector<Sample> load_samples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::Io, "cannot open " + path.string());
  }
  return read_samples(in);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::Io, "cannot open " + path.string());
  }
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorKind::Io, "cannot write " + path.string());
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw Error(ErrorKind::Io, "write failed for " + path.string());
  }
}

}  // namespace semlink
