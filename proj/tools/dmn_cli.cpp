#include <cstdio>

int main() {
    std::puts("dmn-cli: subcommands pending");
    return 0;
}
