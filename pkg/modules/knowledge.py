"""
MÓDULO: KNOWLEDGE
Responsabilidad: Contener los catálogos estáticos del dominio: esquema del panel
de metros, constantes de los procesos generadores de datos y valores de referencia
de la simulación. No tiene lógica compleja, solo diccionarios y constantes.
"""

# Dosis evaluadas en los estudios de simulación
DOSIS_SIMULACION = (3.0, 4.0, 5.0)

# Cuantiles de la dosis usados como grilla en el análisis de aplicación
CUANTILES_DOSIS_APLICACION = (0.025, 0.5, 0.975)

# Ejemplo 1 (outcome Gaussiano): (media, segundo parámetro) de cada ley
EJEMPLO1_X1 = (0.2, 0.1)
EJEMPLO1_X2 = (1.0, 0.6)
EJEMPLO1_U = (0.2, 0.1)
EJEMPLO1_DOSIS = {"intercepto": 1.0, "x1": 4.0, "x2": 2.0, "u": 1.0, "ruido_var": 1.0}
EJEMPLO1_OUTCOME = {"escala": 20.0, "d": 1.0, "x1": 1.0, "x2": -0.25, "u": 0.5, "ruido_var": 1.0}

# Ejemplo 2 (outcome Poisson): log-media = b0 + b_d·d + b_x1·x1 + b_x2·x2 + b_u·u
EJEMPLO2_OUTCOME = {"intercepto": 1.0, "d": 0.2, "x1": 0.005 / 100, "x2": -0.002 / 100, "u": 0.1}

# Valores de referencia del estudio de simulación (verdad y promedios por método)
VALORES_REFERENCIA = {
    "one": {
        "verdad": {3.0: 6.046, 4.0: 7.046, 5.0: 8.046},
        "cov-bb": {"av_est": (6.016, 7.046, 8.076), "av_est_var": (0.004, 0.003, 0.004), "coverage": (91.8, 95.6, 93.1)},
        "wor-bb": {"av_est": (6.020, 7.034, 8.052), "av_est_var": (0.032, 0.023, 0.041), "coverage": (84.7, 84.6, 86.6)},
        "cov-dp": {"av_est": (6.020, 7.049, 8.079), "av_est_var": (0.004, 0.003, 0.004), "coverage": (97.7, 98.5, 98.3)},
        "wor-dp": {"av_est": (6.011, 7.050, 8.089), "av_est_var": (0.021, 0.013, 0.022), "coverage": (97.8, 98.4, 97.9)},
    },
    "two": {
        "verdad": {3.0: 5.474, 4.0: 6.686, 5.0: 8.167},
        "cov-bb": {"av_est": (5.294, 6.633, 8.285), "av_est_var": (0.017, 0.018, 0.031), "coverage": (72.7, 93.4, 88.5)},
        "wor-bb": {"av_est": (5.417, 6.692, 8.251), "av_est_var": (0.172, 0.140, 0.201), "coverage": (83.8, 85.3, 82.9)},
        "cov-dp": {"av_est": (5.301, 6.639, 8.293), "av_est_var": (0.017, 0.018, 0.029), "coverage": (91.8, 95.6, 93.1)},
        "wor-dp": {"av_est": (5.459, 6.723, 8.271), "av_est_var": (0.110, 0.140, 0.138), "coverage": (94.8, 98.8, 97.5)},
    },
}


class CatalogoMetro:
    """
    Esquema del panel mensual de metros: tratamiento (ridership), outcomes
    (casos) y confusores variables en el tiempo, con su transformación habitual.
    """

    def __init__(self):
        # Tratamiento
        self.dosis = {
            "ridership": "PASAJEROS POR DIA; SE ANALIZA EN ESCALA LOG",
        }

        # Outcomes
        self.outcomes = {
            "cases": "CASOS CONFIRMADOS COVID-19; CONTEO O ESCALA log(x+1)",
        }

        # Confusores variables en el tiempo
        self.confusores = {
            "deaths": "MUERTES CONFIRMADAS COVID-19; ESCALA log(x+1)",
            "stringency": "INDICE DE SEVERIDAD DE MEDIDAS 0-100",
            "vaccinations": "DOSIS TOTALES DE VACUNA POR CADA CIEN HABITANTES",
            "retail_recreation": "MOVILIDAD COMERCIO Y RECREACION VS LINEA BASE",
            "grocery_pharmacy": "MOVILIDAD SUPERMERCADOS Y FARMACIAS VS LINEA BASE",
            "parks": "MOVILIDAD PARQUES VS LINEA BASE",
            "transit_stations": "MOVILIDAD ESTACIONES DE TRANSPORTE VS LINEA BASE",
            "workplaces": "MOVILIDAD LUGARES DE TRABAJO VS LINEA BASE",
            "residential": "MOVILIDAD ZONAS RESIDENCIALES VS LINEA BASE",
            "cases_lag1": "CASOS DEL MES ANTERIOR EN ESCALA log(x+1)",
        }

        # Transformación habitual por columna
        self.transformaciones = {
            "ridership": "log",
            "cases": "log1p",
            "deaths": "log1p",
        }

    def get_concepto(self, columna):
        for catalogo in (self.dosis, self.outcomes, self.confusores):
            if columna in catalogo:
                return catalogo[columna]
        return "VARIABLE_NO_ESPECIFICADA"

    def get_transformacion(self, columna):
        return self.transformaciones.get(columna, "identity")

    @property
    def nombres_confusores(self):
        return list(self.confusores)
