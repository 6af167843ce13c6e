/** Debounced single-flight task runner for slider interaction.
 *
 * Requests made while a run is pending or in flight overwrite each other
 * (last-write-wins); at most one task executes at a time and executions
 * are spaced by at least the debounce interval. */

export class Debouncer {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private running = false;
  private pending: (() => void | Promise<void>) | null = null;

  constructor(private readonly intervalMs: number = 100) {}

  request(task: () => void | Promise<void>): void {
    this.pending = task;
    if (this.timer === null && !this.running) {
      this.arm();
    }
  }

  private arm(): void {
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.fire();
    }, this.intervalMs);
  }

  private async fire(): Promise<void> {
    const task = this.pending;
    this.pending = null;
    if (!task) return;
    this.running = true;
    try {
      await task();
    } finally {
      this.running = false;
      if (this.pending) this.arm();
    }
  }
}
