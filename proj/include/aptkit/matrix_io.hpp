#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "aptkit/matrix.hpp"

namespace aptkit {

// Binary matrix file: magic "APTM", u32 version (=1), u64 rows, u64 cols,
// then rows*cols little-endian f64 in row-major order. Round-trips are
// byte-exact (doubles are written bit-for-bit).
void write_aptm(const std::string& path, const Matrix& m);
Matrix read_aptm(const std::string& path);

// CSV export with header "row,col,value"; values printed with %.17g so the
// text round-trips doubles exactly.
void write_csv(std::ostream& os, const Matrix& m);
void write_csv(const std::string& path, const Matrix& m);

// Checkpoint container: magic "APTC", u32 version (=1), u64 tensor count,
// u64 manifest byte length, the manifest ("name,rows,cols,offset\n" per
// tensor, offsets from file start), then one APTM block per tensor. Scalars
// are stored as 1x1 tensors. Byte-exact round trip.
using NamedMatrix = std::pair<std::string, Matrix>;

void write_checkpoint(const std::string& path, const std::vector<NamedMatrix>& tensors);
std::vector<NamedMatrix> read_checkpoint(const std::string& path);

}  // namespace aptkit
