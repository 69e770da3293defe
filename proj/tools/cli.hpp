#pragma once

#include <iosfwd>

namespace deepjko::cli {

// Exit codes: 0 success, 1 a verify check failed, 2 usage error, 3 runtime error.
// Every failure writes exactly one line `error[<code>]: <message>` to err.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace deepjko::cli
