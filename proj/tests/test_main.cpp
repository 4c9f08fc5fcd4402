#include <gtest/gtest.h>

#include "clinstructor/log.hpp"

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  clinstructor::log::set_level(clinstructor::log::Level::kWarn);
  return RUN_ALL_TESTS();
}
