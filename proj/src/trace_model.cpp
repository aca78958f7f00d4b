#include "perfcity/trace_model.hpp"

namespace perfcity {

namespace {
constexpr const char* kPlaceholderClass = "?";
}

bool MethodDescriptor::is_placeholder() const {
  return class_name == kPlaceholderClass && package_path.empty() &&
         method_name == "method#" + std::to_string(id.value);
}

MethodDescriptor MethodDescriptor::placeholder(MethodId id) {
  return MethodDescriptor{id, "method#" + std::to_string(id.value), kPlaceholderClass, {}};
}

Window::Window(Micros length, Micros end) : length_micros(length), end_micros(end) {
  if (length <= 0) throw Error("window length must be positive");
}

bool has_prefix(const PackagePath& path, const PackagePath& prefix) {
  if (prefix.size() > path.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (path[i] != prefix[i]) return false;
  return true;
}

PackagePath split_package(const std::string& dotted) {
  PackagePath out;
  if (dotted.empty()) return out;
  std::size_t begin = 0;
  while (true) {
    auto dot = dotted.find('.', begin);
    out.push_back(dotted.substr(begin, dot - begin));
    if (dot == std::string::npos) break;
    begin = dot + 1;
  }
  return out;
}

std::string join_package(const PackagePath& path) {
  std::string out;
  for (const auto& part : path) {
    if (!out.empty()) out += '.';
    out += part;
  }
  return out;
}

MethodRegistry::Key MethodRegistry::key_of(const MethodDescriptor& d) {
  return {d.package_path, d.class_name, d.method_name};
}

bool MethodRegistry::register_method(const MethodDescriptor& desc) {
  if (desc.method_name.empty()) throw Error("method name must be non-empty");

  auto name_it = by_name_.find(key_of(desc));
  if (name_it != by_name_.end() && name_it->second != desc.id.value) {
    throw ConflictingRegistration("method " + join_package(desc.package_path) + "." +
                                  desc.class_name + "." + desc.method_name +
                                  " already registered under id " +
                                  std::to_string(name_it->second));
  }

  auto it = by_id_.find(desc.id.value);
  if (it != by_id_.end()) {
    if (it->second == desc) return false;
    if (!it->second.is_placeholder() || desc.is_placeholder()) {
      throw ConflictingRegistration("id " + std::to_string(desc.id.value) +
                                    " is already bound to " + it->second.method_name);
    }
    by_name_.erase(key_of(it->second));
    it->second = desc;
  } else {
    by_id_.emplace(desc.id.value, desc);
  }
  by_name_.emplace(key_of(desc), desc.id.value);
  ++revision_;
  return true;
}

std::optional<MethodDescriptor> MethodRegistry::lookup(MethodId id) const {
  auto it = by_id_.find(id.value);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

std::vector<MethodDescriptor> MethodRegistry::descriptors() const {
  std::vector<MethodDescriptor> out;
  out.reserve(by_id_.size());
  for (const auto& [id, desc] : by_id_) out.push_back(desc);
  return out;
}

}  // namespace perfcity
