#include "cclab/version.hpp"

namespace cclab {
const char* version() { return "0.1.0"; }
}  // namespace cclab
