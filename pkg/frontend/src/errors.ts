/** Error taxonomy: every failure surfaces as a catchable exception. */

export class BindingError extends Error {}

/** Bad shapes, dtypes, aliased buffers, unknown options. */
export class ArgumentError extends BindingError {}

/** Released or foreign saved-context handles. */
export class LifecycleError extends BindingError {}

/** The kernel process reported a numeric/degenerate-input failure. */
export class KernelNumericError extends BindingError {}

/** The kernel process reported an I/O failure, or local file I/O failed. */
export class KernelIOError extends BindingError {}

/** The kernel executable could not be run or exited unexpectedly. */
export class KernelInvocationError extends BindingError {}
