#pragma once

#include <gtest/gtest.h>

#include "coast/error.hpp"

namespace coast::testing {

/// Runs `f` and returns the code of the coast::Error it throws. Records a
/// test failure (and returns Io) when nothing is thrown.
template <typename F>
ErrorCode code_of(F &&f) {
  try {
    f();
  } catch (const Error &err) {
    return err.code();
  }
  ADD_FAILURE() << "no coast::Error thrown";
  return ErrorCode::Io;
}

}  // namespace coast::testing
