// Message catalogue for the live balance service (see ../docs/protocol.md).

export interface StateFrame {
  kind: 'frame';
  seq: number;
  t_ms: number;
  cop_x: number;
  cop_y: number;
  f_total_g: number;
  per_cell_g: number[];
  theta_e: number;
  torso: number;
  hip: number;
  ankle: number;
  joints_deg: number[];
  support: 'double' | 'left' | 'right';
  fallen: number;
  single_support: number;
  setpoint: { x: number; y: number } | null;
  stale: { left: boolean; right: boolean };
  gains: { kp: number; ki: number; kd: number };
  control_enabled: boolean;
  tilt_deg: number;
}

export interface Ack {
  kind: 'ack';
  id: number | null;
  ok: boolean;
  type?: string;
  applied?: Record<string, unknown>;
  error?: { code: string; message: string };
}

export type ServerMessage = StateFrame | Ack;

export class ProtocolError extends Error {}

function expectNumber(obj: Record<string, unknown>, key: string): number {
  const v = obj[key];
  if (typeof v !== 'number' || !Number.isFinite(v)) {
    throw new ProtocolError(`frame field ${key} missing or not a finite number`);
  }
  return v;
}

export function parseServerMessage(raw: string): ServerMessage {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch (e) {
    throw new ProtocolError(`not JSON: ${String(e)}`);
  }
  if (typeof doc !== 'object' || doc === null) {
    throw new ProtocolError('message is not an object');
  }
  const obj = doc as Record<string, unknown>;
  if (obj.kind === 'ack') {
    if (typeof obj.ok !== 'boolean') throw new ProtocolError('ack without ok');
    return obj as unknown as Ack;
  }
  if (obj.kind === 'frame') {
    // validate the fields every view depends on; pass the rest through
    expectNumber(obj, 'seq');
    expectNumber(obj, 'cop_x');
    expectNumber(obj, 'cop_y');
    expectNumber(obj, 'theta_e');
    if (!Array.isArray(obj.per_cell_g) || obj.per_cell_g.length !== 8) {
      throw new ProtocolError('frame per_cell_g must hold 8 cells');
    }
    if (obj.support !== 'double' && obj.support !== 'left' && obj.support !== 'right') {
      throw new ProtocolError(`bad support ${String(obj.support)}`);
    }
    return obj as unknown as StateFrame;
  }
  throw new ProtocolError(`unknown message kind ${String(obj.kind)}`);
}

// -- command builders --------------------------------------------------------

export interface Command {
  type: string;
  [key: string]: unknown;
}

export const commands = {
  setGains(kp: number, ki: number, kd: number): Command {
    return { type: 'set_gains', kp, ki, kd };
  },
  setSetpoint(x: number, y: number): Command {
    return { type: 'set_setpoint', x, y };
  },
  setControl(enabled: boolean): Command {
    return { type: 'set_control', enabled };
  },
  setTilt(deg: number): Command {
    return { type: 'set_tilt', deg };
  },
  liftFoot(foot: 'left' | 'right'): Command {
    return { type: 'lift_foot', foot };
  },
  lowerFoot(): Command {
    return { type: 'lower_foot' };
  },
  tare(foot: 'left' | 'right', cell: number): Command {
    return { type: 'tare', foot, cell };
  },
  setCoeff(foot: 'left' | 'right', cell: number, gradient: number, offset: number): Command {
    return { type: 'set_coeff', foot, cell, gradient, offset };
  },
  saveStore(): Command {
    return { type: 'save_store' };
  },
  loadStore(): Command {
    return { type: 'load_store' };
  },
  startTrial(foot: 'left' | 'right'): Command {
    return { type: 'start_trial', foot };
  },
  stopTrial(): Command {
    return { type: 'stop_trial' };
  },
  reset(): Command {
    return { type: 'reset' };
  },
};
