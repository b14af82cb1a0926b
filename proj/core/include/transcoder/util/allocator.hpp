#pragma once

namespace transcoder::util {

/// Keeps freed tensor buffers inside the process heap instead of returning
/// them to the OS after every step. Without this, glibc unmaps large blocks
/// and the next step pays for fresh zero pages. No-op on other C libraries.
/// Call once at program start.
void configure_allocator() noexcept;

}  // namespace transcoder::util
