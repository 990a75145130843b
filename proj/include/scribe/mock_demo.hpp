#pragma once

#include <memory>

#include "scribe/backend.hpp"

namespace scribe {

// Mock chat backend whose handler synthesizes deterministic, well-formed
// responses for the three prompt families (segmentation, distillation,
// judging) from the prompt content itself. It exercises the real parsers, so
// offline pipeline runs cover the same code paths as live ones.
std::shared_ptr<MockChatBackend> make_demo_chat_backend();

}  // namespace scribe
