#include "cabledyn/rng.hpp"

#include <cmath>

#include "cabledyn/types.hpp"

namespace cabledyn {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

double Rng::normal() {
  if (have_cached_) {
    have_cached_ = false;
    return cached_;
  }
  // Box-Muller; u1 in (0,1] to keep the log finite.
  double u1 = 1.0 - uniform01();
  double u2 = uniform01();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * M_PI * u2;
  cached_ = r * std::sin(theta);
  have_cached_ = true;
  return r * std::cos(theta);
}

std::uint64_t mix_seed(std::uint64_t base, std::string_view label,
                       std::uint64_t index) {
  return splitmix64(base ^ splitmix64(fnv1a(label) + 0x9e3779b97f4a7c15ull * (index + 1)));
}

Rng Rng::fork(std::string_view label, std::uint64_t index) const {
  return Rng(mix_seed(seed_value_, label, index));
}

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Vaulting: return "vaulting";
    case TaskKind::Knocking: return "knocking";
    case TaskKind::Weaving: return "weaving";
  }
  throw Error("unknown task kind");
}

TaskKind task_kind_from_string(const std::string& name) {
  if (name == "vaulting") return TaskKind::Vaulting;
  if (name == "knocking") return TaskKind::Knocking;
  if (name == "weaving") return TaskKind::Weaving;
  throw Error("unknown task kind: " + name);
}

}  // namespace cabledyn
