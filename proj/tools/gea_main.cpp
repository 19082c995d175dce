#include <cstdio>

int main() {
    std::puts("gea: CLI scaffolding; subcommands land with the cli module");
    return 0;
}
