#ifndef SEP_CLI_HPP
#define SEP_CLI_HPP

namespace sep {

// Exit codes: 0 success, 1 usage error, 2 processing error.
int run_cli(int argc, const char* const* argv);

} // namespace sep

#endif
