#include "aptkit/matrix_io.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace aptkit {

namespace {

// The formats are defined little-endian; this implementation targets
// little-endian hosts and writes native byte order.
void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void put_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::uint64_t get_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

void write_aptm_block(std::ostream& os, const Matrix& m) {
  os.write("APTM", 4);
  put_u32(os, 1);
  put_u64(os, m.rows);
  put_u64(os, m.cols);
  os.write(reinterpret_cast<const char*>(m.data.data()),
           static_cast<std::streamsize>(m.data.size() * sizeof(double)));
}

Matrix read_aptm_block(std::istream& is, const std::string& path) {
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "APTM", 4) != 0)
    throw std::runtime_error("read_aptm: bad magic in " + path);
  const std::uint32_t version = get_u32(is);
  if (version != 1)
    throw std::runtime_error("read_aptm: unsupported version " + std::to_string(version) +
                             " in " + path);
  const std::uint64_t rows = get_u64(is);
  const std::uint64_t cols = get_u64(is);
  Matrix m(rows, cols);
  is.read(reinterpret_cast<char*>(m.data.data()),
          static_cast<std::streamsize>(m.data.size() * sizeof(double)));
  if (!is) throw std::runtime_error("read_aptm: truncated file " + path);
  return m;
}

}  // namespace

void write_aptm(const std::string& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_aptm: cannot open " + path);
  write_aptm_block(os, m);
  if (!os) throw std::runtime_error("write_aptm: write failed for " + path);
}

Matrix read_aptm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_aptm: cannot open " + path);
  return read_aptm_block(is, path);
}

void write_csv(std::ostream& os, const Matrix& m) {
  os << "row,col,value\n";
  char buf[40];
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      os << i << ',' << j << ',' << buf << '\n';
    }
}

void write_csv(const std::string& path, const Matrix& m) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_csv: cannot open " + path);
  write_csv(os, m);
}

void write_checkpoint(const std::string& path, const std::vector<NamedMatrix>& tensors) {
  std::ostringstream manifest;
  // Header: magic(4) + version(4) + count(8) + manifest_len(8).
  const std::size_t header = 4 + 4 + 8 + 8;
  std::vector<std::uint64_t> sizes;
  for (const auto& [name, m] : tensors) {
    if (name.find(',') != std::string::npos || name.find('\n') != std::string::npos)
      throw std::invalid_argument("write_checkpoint: invalid tensor name '" + name + "'");
    sizes.push_back(4 + 4 + 8 + 8 + m.size() * sizeof(double));
  }
  // Offsets depend on the manifest length, which depends on the offsets'
  // digit counts. Re-render until the length is a fixed point; it grows
  // monotonically, so this terminates.
  std::string manifest_text;
  for (;;) {
    std::uint64_t offset = header + manifest_text.size();
    manifest.str("");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      manifest << tensors[i].first << ',' << tensors[i].second.rows << ','
               << tensors[i].second.cols << ',' << offset << '\n';
      offset += sizes[i];
    }
    std::string next = manifest.str();
    const bool stable = next.size() == manifest_text.size();
    manifest_text = std::move(next);
    if (stable) break;
  }

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_checkpoint: cannot open " + path);
  os.write("APTC", 4);
  put_u32(os, 1);
  put_u64(os, tensors.size());
  put_u64(os, manifest_text.size());
  os.write(manifest_text.data(), static_cast<std::streamsize>(manifest_text.size()));
  for (const auto& [name, m] : tensors) write_aptm_block(os, m);
  if (!os) throw std::runtime_error("write_checkpoint: write failed for " + path);
}

std::vector<NamedMatrix> read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_checkpoint: cannot open " + path);
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "APTC", 4) != 0)
    throw std::runtime_error("read_checkpoint: bad magic in " + path);
  const std::uint32_t version = get_u32(is);
  if (version != 1)
    throw std::runtime_error("read_checkpoint: unsupported version in " + path);
  const std::uint64_t count = get_u64(is);
  const std::uint64_t manifest_len = get_u64(is);
  std::string manifest(manifest_len, '\0');
  is.read(manifest.data(), static_cast<std::streamsize>(manifest_len));
  if (!is) throw std::runtime_error("read_checkpoint: truncated manifest in " + path);

  std::vector<NamedMatrix> out;
  std::istringstream ms(manifest);
  std::string line;
  while (std::getline(ms, line)) {
    if (line.empty()) continue;
    const std::size_t c1 = line.find(',');
    const std::size_t c2 = line.find(',', c1 + 1);
    const std::size_t c3 = line.find(',', c2 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos || c3 == std::string::npos)
      throw std::runtime_error("read_checkpoint: malformed manifest line '" + line + "'");
    const std::string name = line.substr(0, c1);
    const std::uint64_t offset = std::stoull(line.substr(c3 + 1));
    is.seekg(static_cast<std::streamoff>(offset));
    out.emplace_back(name, read_aptm_block(is, path));
  }
  if (out.size() != count)
    throw std::runtime_error("read_checkpoint: manifest count mismatch in " + path);
  return out;
}

}  // namespace aptkit
