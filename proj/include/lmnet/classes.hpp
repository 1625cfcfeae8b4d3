#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace lmnet {

/// Objectness classes, in output-channel order.
enum class ObjectClass : std::uint8_t { Background = 0, Car = 1, Pedestrian = 2, Cyclist = 3 };

inline constexpr int kNumClasses = 4;
inline constexpr std::array<ObjectClass, 3> kObjectClasses{ObjectClass::Car, ObjectClass::Pedestrian,
                                                           ObjectClass::Cyclist};

constexpr int class_index(ObjectClass c) noexcept { return static_cast<int>(c); }

constexpr std::string_view class_name(ObjectClass c) noexcept {
  switch (c) {
    case ObjectClass::Background: return "Background";
    case ObjectClass::Car: return "Car";
    case ObjectClass::Pedestrian: return "Pedestrian";
    case ObjectClass::Cyclist: return "Cyclist";
  }
  return "Background";
}

/// KITTI type string to class; nullopt for types the detector does not model.
inline std::optional<ObjectClass> class_from_kitti(std::string_view type) noexcept {
  if (type == "Car") return ObjectClass::Car;
  if (type == "Pedestrian") return ObjectClass::Pedestrian;
  if (type == "Cyclist") return ObjectClass::Cyclist;
  return std::nullopt;
}

}  // namespace lmnet
