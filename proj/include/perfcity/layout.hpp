#pragma once

#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "perfcity/trace_model.hpp"

namespace perfcity {

class EmptyRegistry : public Error {
 public:
  EmptyRegistry() : Error("cannot lay out an empty registry") {}
};

/// Axis-aligned rectangle in ground cells; x grows right, z grows away from the viewer.
struct Rect {
  int x = 0;
  int z = 0;
  int width = 0;
  int depth = 0;

  int right() const { return x + width; }
  int top() const { return z + depth; }
  bool contains(const Rect& r) const {
    return r.x >= x && r.z >= z && r.right() <= right() && r.top() <= top();
  }
  bool intersects(const Rect& r) const {
    return r.x < right() && x < r.right() && r.z < top() && z < r.top();
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

struct Plot {
  MethodId method;
  int x = 0;
  int z = 0;
  Rect cell() const { return {x, z, 1, 1}; }
  friend bool operator==(const Plot&, const Plot&) = default;
};

struct Block {
  std::string class_name;
  PackagePath package_path;
  Rect area;
  std::vector<Plot> plots;  // alphabetical by method name, row-major from bottom-left
  friend bool operator==(const Block&, const Block&) = default;
};

struct District;
using DistrictChild = std::variant<Block, std::unique_ptr<District>>;

struct District {
  PackagePath package_path;
  Rect area;
  int depth = 0;  // 0 for top-level districts
  std::size_t method_count = 0;
  std::vector<DistrictChild> children;  // descending method count, ties by name
};

/// Deterministic ground plan of one structure revision.
struct CityLayout {
  std::uint64_t rev = 0;
  std::vector<District> districts;  // descending method count; the first sits at (0,0)
  std::map<std::uint32_t, Plot> index;
  Rect bounds;

  const Plot* plot_of(MethodId id) const;
};

/// Lays out every descriptor: one plot per method, one block per class, one
/// district per package path element. Equal descriptor sets give equal layouts
/// regardless of order. Throws EmptyRegistry when `methods` is empty.
CityLayout build_layout(std::vector<MethodDescriptor> methods, std::uint64_t rev = 0);
CityLayout build_layout(const MethodRegistry& registry);

struct PlotMove {
  MethodId method;
  Plot from;
  Plot to;
};

/// A district whose rectangle changed, or whose exact method set reappears
/// under another package path (re-parenting).
struct DistrictMove {
  PackagePath package_path;
  PackagePath new_path;
  Rect from;
  Rect to;
};

struct StructureDelta {
  std::vector<MethodId> added_plots;
  std::vector<MethodId> removed_plots;
  std::vector<PlotMove> moved_plots;
  std::vector<PackagePath> added_districts;
  std::vector<PackagePath> removed_districts;
  std::vector<DistrictMove> moved_districts;

  bool empty() const {
    return added_plots.empty() && removed_plots.empty() && moved_plots.empty() &&
           added_districts.empty() && removed_districts.empty() && moved_districts.empty();
  }
};

StructureDelta diff_layout(const CityLayout& before, const CityLayout& after);

/// Visits every district depth-first, parents before children.
template <typename Fn>
void for_each_district(const CityLayout& city, Fn&& fn);

/// Visits every block.
template <typename Fn>
void for_each_block(const CityLayout& city, Fn&& fn);

namespace detail {
template <typename Fn>
void walk_district(const District& d, Fn& fn) {
  fn(d);
  for (const auto& child : d.children)
    if (const auto* sub = std::get_if<std::unique_ptr<District>>(&child)) walk_district(**sub, fn);
}
}  // namespace detail

template <typename Fn>
void for_each_district(const CityLayout& city, Fn&& fn) {
  for (const auto& d : city.districts) detail::walk_district(d, fn);
}

template <typename Fn>
void for_each_block(const CityLayout& city, Fn&& fn) {
  for_each_district(city, [&](const District& d) {
    for (const auto& child : d.children)
      if (const auto* b = std::get_if<Block>(&child)) fn(*b, d);
  });
}

}  // namespace perfcity
