#pragma once

namespace fishmerge {

/// Worker cap from the FISHMERGE_THREADS environment variable; defaults to 1
/// (fully sequential). Results are bit-identical for any setting.
int configured_threads();

}  // namespace fishmerge
