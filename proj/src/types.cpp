#include "nanochan/types.hpp"

namespace nanochan {

const char* to_string(Region r) {
  switch (r) {
    case Region::Channel: return "Channel";
    case Region::Omega1: return "Omega1";
    case Region::Omega2: return "Omega2";
    case Region::Omega3: return "Omega3";
  }
  return "?";
}

const char* to_string(BoundaryTag t) {
  switch (t) {
    case BoundaryTag::SideA: return "SideA";
    case BoundaryTag::SideB: return "SideB";
    case BoundaryTag::LateralWall: return "LateralWall";
    case BoundaryTag::OuterWall: return "OuterWall";
  }
  return "?";
}

}  // namespace nanochan
