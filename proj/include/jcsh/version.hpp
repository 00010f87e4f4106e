#ifndef JCSH_VERSION_HPP
#define JCSH_VERSION_HPP

namespace jcsh {
inline constexpr const char* engine_name = "jcsh";
inline constexpr const char* engine_version = "1.0.0";
} // namespace jcsh

#endif
