#include "aptkit/flops.hpp"

#include <sstream>
#include <stdexcept>

namespace aptkit {

namespace {
thread_local FlopCounter* g_active = nullptr;
}

FlopCounter& FlopCounter::operator+=(const FlopCounter& o) {
  macs += o.macs;
  exps += o.exps;
  divs += o.divs;
  cmps += o.cmps;
  adds += o.adds;
  return *this;
}

FlopCounter FlopCounter::operator+(const FlopCounter& o) const {
  FlopCounter r = *this;
  r += o;
  return r;
}

FlopCounter FlopCounter::operator-(const FlopCounter& o) const {
  if (macs < o.macs || exps < o.exps || divs < o.divs || cmps < o.cmps || adds < o.adds)
    throw std::invalid_argument("FlopCounter: negative difference");
  FlopCounter r;
  r.macs = macs - o.macs;
  r.exps = exps - o.exps;
  r.divs = divs - o.divs;
  r.cmps = cmps - o.cmps;
  r.adds = adds - o.adds;
  return r;
}

std::string FlopCounter::describe() const {
  std::ostringstream os;
  os << "macs=" << macs << " exps=" << exps << " divs=" << divs << " cmps=" << cmps
     << " adds=" << adds << " total_flops=" << total_flops();
  return os.str();
}

CountingScope::CountingScope(FlopCounter& target) : prev_(g_active) { g_active = &target; }

CountingScope::~CountingScope() { g_active = prev_; }

bool counting_active() { return g_active != nullptr; }

void record_macs(std::uint64_t n) {
  if (g_active) g_active->macs += n;
}
void record_exps(std::uint64_t n) {
  if (g_active) g_active->exps += n;
}
void record_divs(std::uint64_t n) {
  if (g_active) g_active->divs += n;
}
void record_cmps(std::uint64_t n) {
  if (g_active) g_active->cmps += n;
}
void record_adds(std::uint64_t n) {
  if (g_active) g_active->adds += n;
}

}  // namespace aptkit
