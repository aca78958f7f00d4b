#include "perfcity/layout.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <tuple>

namespace perfcity {

namespace {

constexpr int kBorder = 1;
constexpr int kGap = 1;
constexpr double kShelfSlack = 1.2;

struct PackageNode {
  std::map<std::string, PackageNode> subpackages;
  std::map<std::string, std::vector<const MethodDescriptor*>> classes;
  std::size_t method_count = 0;
};

struct Size {
  int width = 0;
  int depth = 0;
};

struct Placement {
  int x = 0;
  int z = 0;
};

/// Shelf packing: left to right from the bottom-left, a new shelf above when the
/// row would exceed the width cap. Items keep their input order.
std::vector<Placement> shelf_pack(const std::vector<Size>& items, Size& total) {
  std::int64_t area = 0;
  int widest = 0;
  for (const auto& s : items) {
    area += static_cast<std::int64_t>(s.width) * s.depth;
    widest = std::max(widest, s.width);
  }
  const double cap =
      std::max(std::ceil(std::sqrt(static_cast<double>(area))) * kShelfSlack, static_cast<double>(widest));

  std::vector<Placement> out;
  out.reserve(items.size());
  int x = 0;
  int shelf_z = 0;
  int shelf_depth = 0;
  total = {};
  for (const auto& s : items) {
    if (x > 0 && x + s.width > cap) {
      shelf_z += shelf_depth + kGap;
      x = 0;
      shelf_depth = 0;
    }
    out.push_back({x, shelf_z});
    total.width = std::max(total.width, x + s.width);
    x += s.width + kGap;
    shelf_depth = std::max(shelf_depth, s.depth);
  }
  total.depth = shelf_z + shelf_depth;
  return out;
}

void translate(Block& b, int dx, int dz) {
  b.area.x += dx;
  b.area.z += dz;
  for (auto& p : b.plots) {
    p.x += dx;
    p.z += dz;
  }
}

void translate(District& d, int dx, int dz) {
  d.area.x += dx;
  d.area.z += dz;
  for (auto& child : d.children) {
    if (auto* b = std::get_if<Block>(&child))
      translate(*b, dx, dz);
    else
      translate(*std::get<std::unique_ptr<District>>(child), dx, dz);
  }
}

Block make_block(const std::string& class_name, const PackagePath& path,
                 std::vector<const MethodDescriptor*> methods) {
  std::sort(methods.begin(), methods.end(), [](const auto* a, const auto* b) {
    return std::tie(a->method_name, a->id) < std::tie(b->method_name, b->id);
  });
  const int n = static_cast<int>(methods.size());
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  const int rows = (n + cols - 1) / cols;

  Block b;
  b.class_name = class_name;
  b.package_path = path;
  b.area = {0, 0, cols, rows};
  b.plots.reserve(methods.size());
  for (int i = 0; i < n; ++i) b.plots.push_back({methods[i]->id, i % cols, i / cols});
  return b;
}

std::size_t count_of(const DistrictChild& c) {
  if (const auto* b = std::get_if<Block>(&c)) return b->plots.size();
  return std::get<std::unique_ptr<District>>(c)->method_count;
}

const std::string& name_of(const DistrictChild& c) {
  static const std::string kDefault;
  if (const auto* b = std::get_if<Block>(&c)) return b->class_name;
  const auto& path = std::get<std::unique_ptr<District>>(c)->package_path;
  return path.empty() ? kDefault : path.back();
}

Size size_of(const DistrictChild& c) {
  if (const auto* b = std::get_if<Block>(&c)) return {b->area.width, b->area.depth};
  const auto& d = *std::get<std::unique_ptr<District>>(c);
  return {d.area.width, d.area.depth};
}

/// Size-ordered sequence: larger first, then name, then sub-districts before blocks.
void order_children(std::vector<DistrictChild>& children) {
  std::stable_sort(children.begin(), children.end(), [](const DistrictChild& a, const DistrictChild& b) {
    const auto ca = count_of(a), cb = count_of(b);
    if (ca != cb) return ca > cb;
    const auto& na = name_of(a);
    const auto& nb = name_of(b);
    if (na != nb) return na < nb;
    return a.index() > b.index();
  });
}

/// Packs children inside a 1-cell border; the district's origin is (0,0) until
/// its parent translates it.
void pack_district(District& d) {
  order_children(d.children);
  std::vector<Size> sizes;
  sizes.reserve(d.children.size());
  for (const auto& c : d.children) sizes.push_back(size_of(c));
  Size inner;
  const auto places = shelf_pack(sizes, inner);
  for (std::size_t i = 0; i < d.children.size(); ++i) {
    const int dx = places[i].x + kBorder;
    const int dz = places[i].z + kBorder;
    if (auto* b = std::get_if<Block>(&d.children[i]))
      translate(*b, dx, dz);
    else
      translate(*std::get<std::unique_ptr<District>>(d.children[i]), dx, dz);
  }
  d.area = {0, 0, inner.width + 2 * kBorder, inner.depth + 2 * kBorder};
}

District build_district(const PackageNode& node, const PackagePath& path, int depth, bool with_subpackages) {
  District d;
  d.package_path = path;
  d.depth = depth;
  for (const auto& [cls, methods] : node.classes) {
    d.children.emplace_back(make_block(cls, path, methods));
    d.method_count += methods.size();
  }
  if (with_subpackages) {
    for (const auto& [name, sub] : node.subpackages) {
      auto sub_path = path;
      sub_path.push_back(name);
      auto child = std::make_unique<District>(build_district(sub, sub_path, depth + 1, true));
      d.method_count += child->method_count;
      d.children.emplace_back(std::move(child));
    }
  }
  pack_district(d);
  return d;
}

void collect_ids(const District& d, std::vector<std::uint32_t>& out) {
  for (const auto& child : d.children) {
    if (const auto* b = std::get_if<Block>(&child)) {
      for (const auto& p : b->plots) out.push_back(p.method.value);
    } else {
      collect_ids(*std::get<std::unique_ptr<District>>(child), out);
    }
  }
}

void index_plots(const District& d, std::map<std::uint32_t, Plot>& index) {
  for (const auto& child : d.children) {
    if (const auto* b = std::get_if<Block>(&child)) {
      for (const auto& p : b->plots) index.emplace(p.method.value, p);
    } else {
      index_plots(*std::get<std::unique_ptr<District>>(child), index);
    }
  }
}

}  // namespace

const Plot* CityLayout::plot_of(MethodId id) const {
  auto it = index.find(id.value);
  return it == index.end() ? nullptr : &it->second;
}

CityLayout build_layout(std::vector<MethodDescriptor> methods, std::uint64_t rev) {
  if (methods.empty()) throw EmptyRegistry();
  std::sort(methods.begin(), methods.end(), [](const MethodDescriptor& a, const MethodDescriptor& b) {
    return std::tie(a.package_path, a.class_name, a.method_name, a.id) <
           std::tie(b.package_path, b.class_name, b.method_name, b.id);
  });

  PackageNode root;
  for (const auto& m : methods) {
    PackageNode* node = &root;
    for (const auto& part : m.package_path) node = &node->subpackages[part];
    node->classes[m.class_name].push_back(&m);
  }

  CityLayout city;
  city.rev = rev;
  if (!root.classes.empty()) city.districts.push_back(build_district(root, {}, 0, false));
  for (const auto& [name, sub] : root.subpackages)
    city.districts.push_back(build_district(sub, {name}, 0, true));

  std::stable_sort(city.districts.begin(), city.districts.end(), [](const District& a, const District& b) {
    if (a.method_count != b.method_count) return a.method_count > b.method_count;
    return a.package_path < b.package_path;
  });

  std::vector<Size> sizes;
  for (const auto& d : city.districts) sizes.push_back({d.area.width, d.area.depth});
  Size total;
  const auto places = shelf_pack(sizes, total);
  for (std::size_t i = 0; i < city.districts.size(); ++i) {
    translate(city.districts[i], places[i].x, places[i].z);
    index_plots(city.districts[i], city.index);
  }
  city.bounds = {0, 0, total.width, total.depth};
  return city;
}

CityLayout build_layout(const MethodRegistry& registry) {
  return build_layout(registry.descriptors(), registry.revision());
}

StructureDelta diff_layout(const CityLayout& before, const CityLayout& after) {
  StructureDelta delta;
  for (const auto& [id, plot] : before.index) {
    auto it = after.index.find(id);
    if (it == after.index.end())
      delta.removed_plots.push_back(MethodId{id});
    else if (!(it->second == plot))
      delta.moved_plots.push_back({MethodId{id}, plot, it->second});
  }
  for (const auto& [id, plot] : after.index)
    if (!before.index.count(id)) delta.added_plots.push_back(MethodId{id});

  struct Info {
    Rect area;
    std::vector<std::uint32_t> methods;
  };
  auto collect = [](const CityLayout& city) {
    std::map<PackagePath, Info> out;
    for_each_district(city, [&](const District& d) {
      Info info{d.area, {}};
      collect_ids(d, info.methods);
      std::sort(info.methods.begin(), info.methods.end());
      out.emplace(d.package_path, std::move(info));
    });
    return out;
  };
  const auto old_districts = collect(before);
  const auto new_districts = collect(after);

  std::vector<PackagePath> gone, fresh;
  for (const auto& [path, info] : old_districts) {
    auto it = new_districts.find(path);
    if (it == new_districts.end())
      gone.push_back(path);
    else if (!(it->second.area == info.area))
      delta.moved_districts.push_back({path, path, info.area, it->second.area});
  }
  for (const auto& [path, info] : new_districts)
    if (!old_districts.count(path)) fresh.push_back(path);

  // Pair vanished and new districts holding the same methods; prefer a
  // candidate with the same leaf name.
  std::vector<bool> taken(fresh.size(), false);
  for (const auto& path : gone) {
    const auto& info = old_districts.at(path);
    auto same_leaf = [&](const PackagePath& p) { return !path.empty() && !p.empty() && p.back() == path.back(); };
    std::optional<std::size_t> match;
    for (std::size_t i = 0; i < fresh.size(); ++i) {
      if (taken[i] || info.methods.empty() || new_districts.at(fresh[i]).methods != info.methods) continue;
      if (!match || (same_leaf(fresh[i]) && !same_leaf(fresh[*match]))) match = i;
    }
    if (match) {
      taken[*match] = true;
      delta.moved_districts.push_back({path, fresh[*match], info.area, new_districts.at(fresh[*match]).area});
    } else {
      delta.removed_districts.push_back(path);
    }
  }
  for (std::size_t i = 0; i < fresh.size(); ++i)
    if (!taken[i]) delta.added_districts.push_back(fresh[i]);
  return delta;
}

}  // namespace perfcity
