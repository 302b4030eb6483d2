// Placeholder while the unit suites are brought up; replaced by the full
// acceptance harness.
int main() { return 1; }
