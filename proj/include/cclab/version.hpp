#pragma once

namespace cclab {
const char* version();
}
